mod align;
mod delta;
mod frame;
mod plan;
mod step;

pub use align::{run_alignment, AlignmentConfig, AlignmentReport, FrameRecord, Outcome};
pub use delta::compute_delta;
pub use frame::{reduce_frame, FrameMap, Pass};
pub use plan::{build_step_plan, eval_control, ControlField, FundamentalStepPlan};
pub use step::{density_estimate, run_fundamental_step, StepOutcome, StepRecord};

use crate::error::{Error, Result};

/// Number of slabs `ceil(2 / c)`.
pub fn compute_n(c: f64) -> Result<usize> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::Config(format!("sparsity budget c must lie in (0, 1], got {c}")));
    }
    Ok((2.0 / c - 1e-12).ceil() as usize)
}

/// Step parameters derived from the current velocity height.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepParameters {
    pub t_len: f64,
    pub eta: f64,
    pub alpha: f64,
}

/// `alpha = 1 + 3 / (n L eps)`, `T = min(delta / V, 1 / (alpha L))` and
/// `eta = (V - e^{-LT} T / (n (1 - LT))) / 2`.
pub fn select_parameters(v: f64, delta: f64, lipschitz: f64, n: usize, epsilon: f64) -> Result<StepParameters> {
    for (name, value) in [("V", v), ("delta", delta), ("L", lipschitz), ("epsilon", epsilon)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::Config(format!("{name} must be positive, got {value}")));
        }
    }
    if n == 0 {
        return Err(Error::Config("slab count must be positive".into()));
    }
    let nf = n as f64;
    let alpha = 1.0 + 3.0 / (nf * lipschitz * epsilon);
    let t_len = (delta / v).min(1.0 / (alpha * lipschitz));
    let lt = lipschitz * t_len;
    let eta = 0.5 * (v - (-lt).exp() * t_len / (nf * (1.0 - lt)));
    if !(eta > 0.0) {
        return Err(Error::Invariant(format!("eta = {eta} is not positive (V = {v}, epsilon = {epsilon})")));
    }
    Ok(StepParameters { t_len, eta, alpha })
}

/// Upper bound on the velocity height after one fundamental step:
/// `max(V - e^{-LT} T / n, eta (1 - LT) + L T V)`.
pub fn predicted_height(v: f64, eta: f64, t_len: f64, lipschitz: f64, n: usize) -> f64 {
    let lt = lipschitz * t_len;
    (v - (-lt).exp() * t_len / n as f64).max(eta * (1.0 - lt) + lt * v)
}
