use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

type XiFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

/// The scalar factor `xi` of a cooperative pair force `psi(x, v) = xi(x, v) v`.
#[derive(Clone)]
pub enum Xi {
    /// `xi = k`.
    Constant { k: f64 },
    /// `xi(x, v) = k / (1 + |x|^2)^beta`, independent of `v`.
    PowerLaw { k: f64, beta: f64 },
    /// Arbitrary map; evaluated and contract-checked per pair.
    Custom(Arc<XiFn>),
}

impl fmt::Debug for Xi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Xi::Constant { k } => write!(f, "Constant {{ k: {k} }}"),
            Xi::PowerLaw { k, beta } => write!(f, "PowerLaw {{ k: {k}, beta: {beta} }}"),
            Xi::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// A cooperative interaction kernel with its declared Lipschitz constant.
///
/// `reflected` lists axes along which the kernel has been conjugated by a
/// reflection: the reflected kernel is `psi'(x, v) = R psi(R x, R v)`, whose
/// scalar factor is `xi(R x, R v)`. The built-in kernels are radial in `x`
/// and therefore invariant.
#[derive(Clone, Debug)]
pub struct InteractionKernel {
    name: String,
    xi: Xi,
    lipschitz: f64,
    reflected: Vec<usize>,
}

/// Largest gradient norm of `r -> k / (1 + r^2)^beta`, attained at
/// `r = 1 / sqrt(2 beta + 1)`.
fn power_law_gradient_bound(k: f64, beta: f64) -> f64 {
    if beta == 0.0 {
        return 0.0;
    }
    let r = 1.0 / (2.0 * beta + 1.0).sqrt();
    2.0 * beta * k * r / (1.0 + r * r).powf(beta + 1.0)
}

impl InteractionKernel {
    pub fn constant(k: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0) {
            return Err(Error::Config(format!("constant kernel needs k >= 0, got {k}")));
        }
        Ok(Self { name: "constant".into(), xi: Xi::Constant { k }, lipschitz: k.max(f64::MIN_POSITIVE), reflected: vec![] })
    }

    /// `xi = k / (1 + |x|^2)^beta` with `L = sqrt(k^2 + G^2 D^2)`, where `G`
    /// bounds `|grad xi|` and `D` is the largest relative speed, i.e. the
    /// diameter of the velocity box the dynamics stays in.
    ///
    /// The Jacobian of `psi` is `[v grad(xi)^T | xi I]`, whose spectral norm
    /// is `sqrt(xi^2 + |grad xi|^2 |v|^2)`.
    pub fn power_law(k: f64, beta: f64, velocity_diameter: f64) -> Result<Self> {
        if !(k.is_finite() && k >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(Error::Config(format!("power-law kernel needs k, beta >= 0, got {k}, {beta}")));
        }
        if !(velocity_diameter.is_finite() && velocity_diameter >= 0.0) {
            return Err(Error::Config(format!("bad velocity diameter {velocity_diameter}")));
        }
        let g = power_law_gradient_bound(k, beta);
        let lipschitz = (k * k + g * g * velocity_diameter * velocity_diameter).sqrt();
        Ok(Self {
            name: "power-law".into(),
            xi: Xi::PowerLaw { k, beta },
            lipschitz: lipschitz.max(f64::MIN_POSITIVE),
            reflected: vec![],
        })
    }

    pub fn custom<F>(name: impl Into<String>, xi: F, lipschitz: f64) -> Result<Self>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::Config(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        Ok(Self { name: name.into(), xi: Xi::Custom(Arc::new(xi)), lipschitz, reflected: vec![] })
    }

    /// Replaces the declared Lipschitz constant.
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Result<Self> {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::Config(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        self.lipschitz = lipschitz;
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn xi_form(&self) -> &Xi {
        &self.xi
    }

    pub fn reflected_axes(&self) -> &[usize] {
        &self.reflected
    }

    /// The kernel conjugated by the reflection of `axis`.
    pub fn reflected(&self, axis: usize) -> Self {
        let mut out = self.clone();
        match out.reflected.iter().position(|&a| a == axis) {
            Some(p) => {
                out.reflected.remove(p);
            }
            None => {
                out.reflected.push(axis);
                out.reflected.sort_unstable();
            }
        }
        out
    }

    /// True when `xi` depends on the relative position only and is even in
    /// it; such kernels admit the factorised force evaluation.
    pub fn is_position_radial(&self) -> bool {
        matches!(self.xi, Xi::Constant { .. } | Xi::PowerLaw { .. })
    }

    /// `xi` as a function of `|dx|^2`, for radial kernels.
    #[inline]
    pub(crate) fn xi_radial(&self, r2: f64) -> f64 {
        match self.xi {
            Xi::Constant { k } => k,
            Xi::PowerLaw { k, beta } => {
                if beta == 1.0 {
                    k / (1.0 + r2)
                } else {
                    k / (1.0 + r2).powf(beta)
                }
            }
            Xi::Custom(_) => unreachable!("custom kernels are not radial"),
        }
    }

    /// Evaluates `xi` and checks it is finite and non-negative.
    pub fn xi(&self, dx: &[f64], dv: &[f64]) -> Result<f64> {
        let value = match &self.xi {
            Xi::Constant { .. } | Xi::PowerLaw { .. } => {
                self.xi_radial(dx.iter().map(|c| c * c).sum())
            }
            Xi::Custom(f) => {
                if self.reflected.is_empty() {
                    f(dx, dv)
                } else {
                    let (mut rx, mut rv) = (dx.to_vec(), dv.to_vec());
                    for &a in &self.reflected {
                        rx[a] = -rx[a];
                        rv[a] = -rv[a];
                    }
                    f(&rx, &rv)
                }
            }
        };
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::KernelContract { kernel: self.name.clone(), value });
        }
        Ok(value)
    }

    /// `psi(dx, dv) = xi(dx, dv) dv`.
    pub fn psi(&self, dx: &[f64], dv: &[f64]) -> Result<Vec<f64>> {
        let s = self.xi(dx, dv)?;
        Ok(dv.iter().map(|c| s * c).collect())
    }

    /// Samples pairs of relative states `(dx, dv)` with `|dx_a| <= x_extent[a]`
    /// and `|dv_a| <= v_extent[a]` and returns the largest observed
    /// `|psi(p) - psi(q)| / |p - q|`.
    pub fn sampled_lipschitz(&self, x_extent: &[f64], v_extent: &[f64], pairs: usize, seed: u64) -> Result<f64> {
        let d = x_extent.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |ext: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
            ext.iter().map(|&e| e * (2.0 * rng.random::<f64>() - 1.0)).collect()
        };
        let mut worst: f64 = 0.0;
        for _ in 0..pairs {
            let (ax, av) = (draw(x_extent, &mut rng), draw(v_extent, &mut rng));
            // Mix far pairs with near pairs so local slopes are probed too.
            let scale = 10f64.powf(-4.0 * rng.random::<f64>());
            let bx: Vec<f64> =
                (0..d).map(|a| ax[a] + scale * x_extent[a] * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let bv: Vec<f64> =
                (0..d).map(|a| av[a] + scale * v_extent[a] * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let pa = self.psi(&ax, &av)?;
            let pb = self.psi(&bx, &bv)?;
            let num: f64 = pa.iter().zip(&pb).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
            let den: f64 = ax
                .iter()
                .zip(&bx)
                .chain(av.iter().zip(&bv))
                .map(|(p, q)| (p - q).powi(2))
                .sum::<f64>()
                .sqrt();
            if den > 0.0 {
                worst = worst.max(num / den);
            }
        }
        Ok(worst)
    }

    /// Checks the declared constant against sampled slopes.
    pub fn validate_lipschitz(&self, x_extent: &[f64], v_extent: &[f64], pairs: usize, seed: u64) -> Result<()> {
        let observed = self.sampled_lipschitz(x_extent, v_extent, pairs, seed)?;
        if observed > self.lipschitz * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "kernel `{}` declares L = {} but a sampled slope reaches {observed}",
                self.name, self.lipschitz
            )));
        }
        Ok(())
    }

    /// Checks `xi >= 0` on sampled relative states.
    pub fn validate_sign(&self, x_extent: &[f64], v_extent: &[f64], samples: usize, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..samples {
            let dx: Vec<f64> = x_extent.iter().map(|&e| e * (2.0 * rng.random::<f64>() - 1.0)).collect();
            let dv: Vec<f64> = v_extent.iter().map(|&e| e * (2.0 * rng.random::<f64>() - 1.0)).collect();
            self.xi(&dx, &dv)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_vanishes_at_zero_relative_velocity() {
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        assert_eq!(k.psi(&[3.7], &[0.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn identity_scalar() {
        let k = InteractionKernel::constant(1.0).unwrap();
        assert_eq!(k.psi(&[-5.0], &[2.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn inverse_square_hand_value() {
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        // 1 / (1 + 1) * 3
        assert!((k.psi(&[1.0], &[3.0]).unwrap()[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn negative_xi_breaks_contract() {
        let k = InteractionKernel::custom("repulsive", |_, _| -1.0, 1.0).unwrap();
        assert!(matches!(k.psi(&[0.0], &[1.0]), Err(Error::KernelContract { .. })));
        let k = InteractionKernel::custom("nan", |_, _| f64::NAN, 1.0).unwrap();
        assert!(k.xi(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn gradient_bound_matches_scan() {
        for &beta in &[0.5, 1.0, 2.0] {
            let g = power_law_gradient_bound(1.0, beta);
            let scan = (0..200_000)
                .map(|i| i as f64 * 1e-5)
                .map(|r| 2.0 * beta * r / (1.0 + r * r).powf(beta + 1.0))
                .fold(0.0, f64::max);
            assert!((g - scan).abs() < 1e-8, "beta {beta}: {g} vs {scan}");
        }
    }

    #[test]
    fn declared_constants_hold_on_box() {
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        assert!((k.lipschitz() - (1.0f64 + (9.0 / (8.0 * 3f64.sqrt())).powi(2)).sqrt()).abs() < 1e-12);
        k.validate_lipschitz(&[3.0], &[1.0], 20_000, 1).unwrap();
        InteractionKernel::constant(0.7).unwrap().validate_lipschitz(&[1.0, 1.0], &[1.0, 1.0], 5_000, 2).unwrap();
    }

    #[test]
    fn understated_constant_is_caught() {
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap().with_lipschitz(0.5).unwrap();
        assert!(k.validate_lipschitz(&[3.0], &[1.0], 5_000, 1).is_err());
    }

    #[test]
    fn reflection_flips_custom_arguments() {
        let k = InteractionKernel::custom("skew", |x, _| if x[0] > 0.0 { 2.0 } else { 1.0 }, 2.0).unwrap();
        let r = k.reflected(0);
        assert_eq!(k.xi(&[1.0], &[0.0]).unwrap(), 2.0);
        assert_eq!(r.xi(&[1.0], &[0.0]).unwrap(), 1.0);
        assert_eq!(r.reflected(0).reflected_axes(), &[] as &[usize]);
        // The reflected kernel keeps xi >= 0.
        r.validate_sign(&[2.0], &[2.0], 1000, 3).unwrap();
    }
}
