use super::{Coord, EmpiricalMeasure};
use crate::error::{Error, Result};

/// Histogram estimate of the phase-space density over the support box.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    /// Bin widths, position axes first, then velocity axes.
    pub widths: Vec<f64>,
    /// Bins per axis, same ordering as `widths`.
    pub shape: Vec<usize>,
    /// Mass per bin, row-major over `shape`.
    pub bin_mass: Vec<f64>,
    /// Largest bin mass divided by bin volume.
    pub sup_density: f64,
}

impl DensityEstimate {
    pub fn bin_volume(&self) -> f64 {
        self.widths.iter().product()
    }

    pub fn total_mass(&self) -> f64 {
        self.bin_mass.iter().sum()
    }
}

/// Bins `mu` on a regular grid spanning its support box.
///
/// `bins` lists counts for the position axes followed by the velocity axes
/// (`2 * d` entries). Particles on the upper boundary fall in the last bin.
pub fn estimate_density_sup(mu: &EmpiricalMeasure, bins: &[usize]) -> Result<DensityEstimate> {
    let d = mu.dim();
    if bins.len() != 2 * d || bins.iter().any(|&b| b == 0) {
        return Err(Error::Input(format!("need {} positive bin counts, got {bins:?}", 2 * d)));
    }
    let sb = mu.support_box();
    let coords: Vec<Coord> =
        (0..d).map(Coord::Position).chain((0..d).map(Coord::Velocity)).collect();
    let mut widths = Vec::with_capacity(2 * d);
    for (&c, &b) in coords.iter().zip(bins) {
        let w = sb.width(c);
        if !(w > 0.0) {
            return Err(Error::DegenerateSupport { axis: c.to_string() });
        }
        widths.push(w / b as f64);
    }
    let mut bin_mass = vec![0.0; bins.iter().product()];
    for i in 0..mu.len() {
        let w = mu.weights()[i];
        if w <= 0.0 {
            continue;
        }
        let mut flat = 0;
        for ((&c, &b), &h) in coords.iter().zip(bins).zip(&widths) {
            let k = (((mu.coord(i, c) - sb.lo(c)) / h).floor() as usize).min(b - 1);
            flat = flat * b + k;
        }
        bin_mass[flat] += w;
    }
    let volume: f64 = widths.iter().product();
    let sup_density = bin_mass.iter().copied().fold(0.0, f64::max) / volume;
    Ok(DensityEstimate { widths, shape: bins.to_vec(), bin_mass, sup_density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_square(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs = (0..n).map(|_| rng.random::<f64>()).collect();
        let vs = (0..n).map(|_| rng.random::<f64>()).collect();
        (xs, vs)
    }

    #[test]
    fn uniform_cloud_density_near_one() {
        let (xs, vs) = uniform_square(10_000, 3);
        let mu = EmpiricalMeasure::uniform(1, xs.clone(), vs.clone()).unwrap();
        let est = estimate_density_sup(&mu, &[10, 10]).unwrap();
        // Direct histogram over the same box.
        let sb = mu.support_box();
        let (hx, hv) = ((sb.x_hi[0] - sb.x_lo[0]) / 10.0, (sb.v_hi[0] - sb.v_lo[0]) / 10.0);
        let mut counts = [[0usize; 10]; 10];
        for (x, v) in xs.iter().zip(&vs) {
            let i = (((x - sb.x_lo[0]) / hx) as usize).min(9);
            let j = (((v - sb.v_lo[0]) / hv) as usize).min(9);
            counts[i][j] += 1;
        }
        let max = counts.iter().flatten().max().copied().unwrap();
        let direct = max as f64 / 10_000.0 / (hx * hv);
        assert!((est.sup_density - direct).abs() < 1e-9);
        assert!((0.5..=2.0).contains(&est.sup_density), "{}", est.sup_density);
        assert!((est.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_bin_is_inverse_volume() {
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 2.0, 1.0], vec![0.0, 0.5, 0.25]).unwrap();
        let est = estimate_density_sup(&mu, &[1, 1]).unwrap();
        assert!((est.sup_density - 1.0).abs() < 1e-15);
    }

    #[test]
    fn concentrated_mass_in_one_of_four_bins() {
        // Support [0,2]x[0,2]; the far corner carries only a sliver of mass.
        let w = 1e-15;
        let mu = EmpiricalMeasure::new(1, vec![0.0, 2.0], vec![0.0, 2.0], vec![1.0 - w, w]).unwrap();
        let est = estimate_density_sup(&mu, &[2, 2]).unwrap();
        assert!((est.sup_density - 4.0 / 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_support_is_an_error() {
        let mu = EmpiricalMeasure::uniform(1, vec![1.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!(matches!(estimate_density_sup(&mu, &[2, 2]), Err(Error::DegenerateSupport { .. })));
    }

    #[test]
    fn permutation_invariant() {
        let (xs, vs) = uniform_square(500, 9);
        let mu = EmpiricalMeasure::uniform(1, xs.clone(), vs.clone()).unwrap();
        let mut idx: Vec<usize> = (0..500).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let xs2 = idx.iter().map(|&i| xs[i]).collect();
        let vs2 = idx.iter().map(|&i| vs[i]).collect();
        let nu = EmpiricalMeasure::uniform(1, xs2, vs2).unwrap();
        let a = estimate_density_sup(&mu, &[7, 5]).unwrap();
        let b = estimate_density_sup(&nu, &[7, 5]).unwrap();
        assert_eq!(a.sup_density, b.sup_density);
    }
}
