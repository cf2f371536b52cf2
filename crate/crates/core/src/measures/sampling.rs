//! Seeded initial-measure samplers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{EmpiricalMeasure, SupportBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    /// Uniform on a phase-space box.
    Uniform { bounds: SupportBox },
    /// Independent Gaussians per coordinate, rejected outside `bounds`.
    TruncatedGaussian { mean_x: Vec<f64>, mean_v: Vec<f64>, std_x: Vec<f64>, std_v: Vec<f64>, bounds: SupportBox },
    /// Uniform on `first` with probability `fraction_first`, else on `second`.
    /// The split is deterministic: the first `round(n * fraction_first)`
    /// particles go to `first`.
    TwoCluster { first: SupportBox, second: SupportBox, fraction_first: f64 },
}

fn uniform_in(bx: &SupportBox, rng: &mut ChaCha8Rng, x: &mut Vec<f64>, v: &mut Vec<f64>) {
    for a in 0..bx.dim() {
        x.push(bx.x_lo[a] + (bx.x_hi[a] - bx.x_lo[a]) * rng.random::<f64>());
    }
    for a in 0..bx.dim() {
        v.push(bx.v_lo[a] + (bx.v_hi[a] - bx.v_lo[a]) * rng.random::<f64>());
    }
}

impl Sampler {
    pub fn dim(&self) -> usize {
        match self {
            Sampler::Uniform { bounds } | Sampler::TruncatedGaussian { bounds, .. } => bounds.dim(),
            Sampler::TwoCluster { first, .. } => first.dim(),
        }
    }

    /// Equal-weight sample of `n` particles.
    pub fn sample(&self, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(Error::Config("particle count must be positive".into()));
        }
        let d = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut xs = Vec::with_capacity(n * d);
        let mut vs = Vec::with_capacity(n * d);
        match self {
            Sampler::Uniform { bounds } => {
                for _ in 0..n {
                    uniform_in(bounds, &mut rng, &mut xs, &mut vs);
                }
            }
            Sampler::TruncatedGaussian { mean_x, mean_v, std_x, std_v, bounds } => {
                let lens = [mean_x.len(), mean_v.len(), std_x.len(), std_v.len()];
                if lens.iter().any(|&l| l != d) {
                    return Err(Error::Config("gaussian parameters differ in dimension".into()));
                }
                let normal = |m: f64, s: f64| {
                    Normal::new(m, s).map_err(|e| Error::Config(format!("gaussian ({m}, {s}): {e}")))
                };
                let nx: Vec<Normal<f64>> =
                    mean_x.iter().zip(std_x).map(|(&m, &s)| normal(m, s)).collect::<Result<_>>()?;
                let nv: Vec<Normal<f64>> =
                    mean_v.iter().zip(std_v).map(|(&m, &s)| normal(m, s)).collect::<Result<_>>()?;
                let draw = |dist: &Normal<f64>, lo: f64, hi: f64, rng: &mut ChaCha8Rng| -> Result<f64> {
                    for _ in 0..10_000 {
                        let s = dist.sample(rng);
                        if (lo..=hi).contains(&s) {
                            return Ok(s);
                        }
                    }
                    Err(Error::Config(format!("truncation window [{lo}, {hi}] has negligible mass")))
                };
                for _ in 0..n {
                    for a in 0..d {
                        xs.push(draw(&nx[a], bounds.x_lo[a], bounds.x_hi[a], &mut rng)?);
                    }
                    for a in 0..d {
                        vs.push(draw(&nv[a], bounds.v_lo[a], bounds.v_hi[a], &mut rng)?);
                    }
                }
            }
            Sampler::TwoCluster { first, second, fraction_first } => {
                if first.dim() != second.dim() {
                    return Err(Error::Config("cluster boxes differ in dimension".into()));
                }
                if !(0.0..=1.0).contains(fraction_first) {
                    return Err(Error::Config(format!("cluster fraction {fraction_first} outside [0, 1]")));
                }
                let n_first = (n as f64 * fraction_first).round() as usize;
                for i in 0..n {
                    let bx = if i < n_first { first } else { second };
                    uniform_in(bx, &mut rng, &mut xs, &mut vs);
                }
            }
        }
        EmpiricalMeasure::uniform(d, xs, vs)
    }
}
