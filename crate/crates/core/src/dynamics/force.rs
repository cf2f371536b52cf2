use super::kernel::{InteractionKernel, Xi};
use crate::error::Result;
use crate::measures::EmpiricalMeasure;

/// `(psi * mu)(x, v) = sum_j w_j psi(x_j - x, v_j - v)`, summed in ascending
/// particle order.
pub fn mean_field_force(mu: &EmpiricalMeasure, kernel: &InteractionKernel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let d = mu.dim();
    let mut out = vec![0.0; d];
    let mut dx = vec![0.0; d];
    let mut dv = vec![0.0; d];
    for j in 0..mu.len() {
        let (xj, vj) = (mu.position(j), mu.velocity(j));
        for a in 0..d {
            dx[a] = xj[a] - x[a];
            dv[a] = vj[a] - v[a];
        }
        let s = kernel.xi(&dx, &dv)?;
        let w = mu.weights()[j];
        for a in 0..d {
            out[a] += w * s * dv[a];
        }
    }
    Ok(out)
}

/// Reusable buffers for the all-particle force evaluation.
#[derive(Debug, Default, Clone)]
pub(crate) struct ForceScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Writes `(psi * mu)(x_i, v_i)` for every particle into `out`.
///
/// Radial kernels use `sum_j w_j xi_ij (v_j - v_i) = A_i - v_i B_i` with
/// `A_i = sum_j w_j xi_ij v_j` and `B_i = sum_j w_j xi_ij`, filling both
/// halves of the symmetric pair table in one sweep. The summation order is
/// fixed, so results are reproducible bit for bit.
pub(crate) fn all_forces(
    dim: usize,
    x: &[f64],
    v: &[f64],
    w: &[f64],
    kernel: &InteractionKernel,
    scratch: &mut ForceScratch,
    out: &mut [f64],
) -> Result<()> {
    let n = w.len();
    match kernel.xi_form() {
        Xi::Constant { k } => {
            let k = *k;
            let mut m1 = vec![0.0; dim];
            for j in 0..n {
                for a in 0..dim {
                    m1[a] += w[j] * v[j * dim + a];
                }
            }
            for i in 0..n {
                for a in 0..dim {
                    let vi = v[i * dim + a];
                    out[i * dim + a] = k * (m1[a] - vi);
                }
            }
            Ok(())
        }
        Xi::PowerLaw { .. } => {
            scratch.a.clear();
            scratch.a.resize(n * dim, 0.0);
            scratch.b.clear();
            scratch.b.resize(n, 0.0);
            let (sa, sb) = (&mut scratch.a, &mut scratch.b);
            match dim {
                1 => radial_pairs::<1>(x, v, w, kernel, sa, sb),
                2 => radial_pairs::<2>(x, v, w, kernel, sa, sb),
                3 => radial_pairs::<3>(x, v, w, kernel, sa, sb),
                _ => {
                    for i in 0..n {
                        let xi = &x[i * dim..(i + 1) * dim];
                        for j in i + 1..n {
                            let xj = &x[j * dim..(j + 1) * dim];
                            let r2: f64 = xi.iter().zip(xj).map(|(p, q)| (q - p) * (q - p)).sum();
                            let s = kernel.xi_radial(r2);
                            sb[i] += w[j] * s;
                            sb[j] += w[i] * s;
                            for a in 0..dim {
                                sa[i * dim + a] += w[j] * s * v[j * dim + a];
                                sa[j * dim + a] += w[i] * s * v[i * dim + a];
                            }
                        }
                    }
                }
            }
            for i in 0..n {
                for a in 0..dim {
                    out[i * dim + a] = sa[i * dim + a] - v[i * dim + a] * sb[i];
                }
            }
            Ok(())
        }
        Xi::Custom(_) => {
            let mut dx = vec![0.0; dim];
            let mut dv = vec![0.0; dim];
            for i in 0..n {
                let o = &mut out[i * dim..(i + 1) * dim];
                o.iter_mut().for_each(|e| *e = 0.0);
                for j in 0..n {
                    for a in 0..dim {
                        dx[a] = x[j * dim + a] - x[i * dim + a];
                        dv[a] = v[j * dim + a] - v[i * dim + a];
                    }
                    let s = kernel.xi(&dx, &dv)?;
                    for a in 0..dim {
                        o[a] += w[j] * s * dv[a];
                    }
                }
            }
            Ok(())
        }
    }
}

const LANES: usize = 4;

/// Radial pair sweep in dimension `D` on per-axis copies of the state.
/// Partner contributions `j > i` are gathered in `LANES` interleaved
/// accumulators so the inner loop vectorises.
fn radial_pairs<const D: usize>(x: &[f64], v: &[f64], w: &[f64], kernel: &InteractionKernel, sa: &mut [f64], sb: &mut [f64]) {
    let n = w.len();
    let xs: [Vec<f64>; D] = std::array::from_fn(|a| (0..n).map(|k| x[k * D + a]).collect());
    let wv: [Vec<f64>; D] = std::array::from_fn(|a| (0..n).map(|k| w[k] * v[k * D + a]).collect());
    let mut ta: [Vec<f64>; D] = std::array::from_fn(|_| vec![0.0; n]);
    let (k, beta) = match kernel.xi_form() {
        Xi::PowerLaw { k, beta } => (*k, *beta),
        _ => unreachable!("radial sweep needs a power-law kernel"),
    };
    let xi_of = |r2: f64| if beta == 1.0 { k / (1.0 + r2) } else { k / (1.0 + r2).powf(beta) };
    for i in 0..n {
        let xi: [f64; D] = std::array::from_fn(|a| xs[a][i]);
        let wvi: [f64; D] = std::array::from_fn(|a| wv[a][i]);
        let wi = w[i];
        let mut acc_a = [[0.0; LANES]; D];
        let mut acc_b = [0.0; LANES];
        let start = i + 1;
        let full = (n - start) / LANES * LANES;
        let end = start + full;
        {
            let xt: [&[f64]; D] = std::array::from_fn(|a| &xs[a][start..end]);
            let vt: [&[f64]; D] = std::array::from_fn(|a| &wv[a][start..end]);
            let at = ta.each_mut().map(|t| &mut t[start..end]);
            let (wt, bt) = (&w[start..end], &mut sb[start..end]);
            for c in 0..full / LANES {
                for l in 0..LANES {
                    let j = c * LANES + l;
                    let mut r2 = 0.0;
                    for a in 0..D {
                        let d = xt[a][j] - xi[a];
                        r2 += d * d;
                    }
                    let s = xi_of(r2);
                    acc_b[l] += wt[j] * s;
                    bt[j] += wi * s;
                    for a in 0..D {
                        acc_a[a][l] += vt[a][j] * s;
                        at[a][j] += wvi[a] * s;
                    }
                }
            }
        }
        for j in end..n {
            let mut r2 = 0.0;
            for a in 0..D {
                let d = xs[a][j] - xi[a];
                r2 += d * d;
            }
            let s = xi_of(r2);
            acc_b[0] += w[j] * s;
            sb[j] += wi * s;
            for a in 0..D {
                acc_a[a][0] += wv[a][j] * s;
                ta[a][j] += wvi[a] * s;
            }
        }
        sb[i] += (acc_b[0] + acc_b[1]) + (acc_b[2] + acc_b[3]);
        for a in 0..D {
            let r = &acc_a[a];
            ta[a][i] += (r[0] + r[1]) + (r[2] + r[3]);
        }
    }
    for (kk, chunk) in sa.chunks_mut(D).enumerate() {
        for a in 0..D {
            chunk[a] = ta[a][kk];
        }
    }
}

/// Forces at every particle of `mu`.
pub fn particle_forces(mu: &EmpiricalMeasure, kernel: &InteractionKernel) -> Result<Vec<f64>> {
    let mut out = vec![0.0; mu.positions().len()];
    all_forces(mu.dim(), mu.positions(), mu.velocities(), mu.weights(), kernel, &mut ForceScratch::default(), &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::sampling::Sampler;
    use crate::measures::SupportBox;

    fn sample(dim: usize, n: usize, seed: u64) -> EmpiricalMeasure {
        let b = SupportBox::new(vec![0.0; dim], vec![1.0; dim], vec![-0.5; dim], vec![1.5; dim]).unwrap();
        Sampler::Uniform { bounds: b }.sample(n, seed).unwrap()
    }

    #[test]
    fn fast_paths_agree_with_direct_sum() {
        for dim in [1, 2] {
            let mu = sample(dim, 60, 7);
            for kernel in [
                InteractionKernel::constant(0.8).unwrap(),
                InteractionKernel::power_law(1.3, 1.0, 2.0).unwrap(),
                InteractionKernel::power_law(1.0, 0.7, 2.0).unwrap(),
            ] {
                let fast = particle_forces(&mu, &kernel).unwrap();
                for i in 0..mu.len() {
                    let direct = mean_field_force(&mu, &kernel, mu.position(i), mu.velocity(i)).unwrap();
                    for a in 0..dim {
                        assert!((fast[i * dim + a] - direct[a]).abs() < 1e-13, "{} {dim}", kernel.name());
                    }
                }
            }
        }
    }

    #[test]
    fn custom_kernel_matches_radial_equivalent() {
        let mu = sample(2, 30, 3);
        let radial = InteractionKernel::power_law(1.0, 1.0, 2.0).unwrap();
        let custom = InteractionKernel::custom("same", |x, _| 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]), 2.0).unwrap();
        let a = particle_forces(&mu, &radial).unwrap();
        let b = particle_forces(&mu, &custom).unwrap();
        assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-14));
    }

    #[test]
    fn total_momentum_change_vanishes() {
        let mu = sample(1, 80, 11);
        let f = particle_forces(&mu, &InteractionKernel::power_law(1.0, 1.0, 2.0).unwrap()).unwrap();
        let net: f64 = f.iter().zip(mu.weights()).map(|(f, w)| f * w).sum();
        assert!(net.abs() < 1e-14);
    }

    #[test]
    fn two_particle_hand_value() {
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        // 0.5 * (1 / 2) * (+-1)
        assert_eq!(particle_forces(&mu, &k).unwrap(), vec![0.25, -0.25]);
    }

    #[test]
    fn negative_kernel_surfaces_at_evaluation() {
        let mu = sample(1, 5, 1);
        let bad = InteractionKernel::custom("bad", |_, _| -0.1, 1.0).unwrap();
        assert!(particle_forces(&mu, &bad).is_err());
    }
}
