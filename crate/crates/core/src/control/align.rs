use super::frame::{reduce_frame, FrameMap, Pass};
use super::plan::build_step_plan;
use super::step::{density_estimate, run_fundamental_step, StepRecord};
use crate::dynamics::{IntegratorConfig, InteractionKernel};
use crate::error::{Error, Result};
use crate::measures::{Coord, EmpiricalMeasure};
use crate::tolerances;
use crate::verify::ConstraintTrace;

/// Inputs of an alignment run.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentConfig {
    /// Sparsity budget in `(0, 1]`.
    pub c: f64,
    /// Target precision; in a canonical frame, the velocity height to reach.
    pub epsilon: f64,
    pub v_star: Vec<f64>,
    /// Lipschitz constant used in the step parameters.
    pub lipschitz: f64,
    /// Step cap per pass; `None` derives it from the first plan of the pass.
    pub max_steps: Option<usize>,
    pub integrator: IntegratorConfig,
    /// Keep the state (original frame) after every step.
    pub record_snapshots: bool,
}

impl AlignmentConfig {
    pub fn new(c: f64, epsilon: f64, v_star: Vec<f64>, lipschitz: f64, integrator: IntegratorConfig) -> Result<Self> {
        let cfg = Self { c, epsilon, v_star, lipschitz, max_steps: None, integrator, record_snapshots: false };
        cfg.validate(cfg.v_star.len())?;
        Ok(cfg)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::Config(format!("sparsity budget c must lie in (0, 1], got {}", self.c)));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(Error::Config(format!("Lipschitz constant must be positive, got {}", self.lipschitz)));
        }
        if self.v_star.len() != dim || self.v_star.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config(format!("target velocity must have {dim} finite components")));
        }
        if self.max_steps == Some(0) {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// One pass along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub axis: usize,
    pub pass: Pass,
    pub map: FrameMap,
    pub precision: f64,
    /// Velocity height in the frame when the pass starts.
    pub v0: f64,
    pub steps: usize,
    pub horizon: f64,
    /// `alpha` of the pass (constant: it depends on `n`, `L`, the precision).
    pub alpha: Option<f64>,
    /// `e^{1 / alpha} n V0` when the pass took steps.
    pub horizon_bound: f64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Aligned,
    StepCapReached { axis: usize, pass: Pass },
    ConstraintBreach { time: f64, mass: f64, limit: f64 },
}

#[derive(Debug, Clone)]
pub struct AlignmentReport {
    pub steps: Vec<StepRecord>,
    pub frames: Vec<FrameRecord>,
    pub trace: ConstraintTrace,
    pub total_horizon: f64,
    pub horizon_bound: f64,
    pub outcome: Outcome,
    /// All final velocities within `epsilon` of `v*` and no early stop.
    pub terminated: bool,
    pub final_state: EmpiricalMeasure,
    /// `(t, state)` in the original frame: the initial state and the state
    /// after every step, when requested.
    pub snapshots: Vec<(f64, EmpiricalMeasure)>,
    pub warnings: Vec<String>,
}

impl AlignmentReport {
    /// Largest Euclidean distance of a final velocity from `v_star`.
    pub fn final_spread(&self, v_star: &[f64]) -> f64 {
        (0..self.final_state.len())
            .map(|i| {
                self.final_state.velocity(i).iter().zip(v_star).map(|(v, s)| (v - s).powi(2)).sum::<f64>().sqrt()
            })
            .fold(0.0, f64::max)
    }
}

fn frame_height(mu: &EmpiricalMeasure, axis: usize) -> f64 {
    mu.marginal(Coord::Velocity(axis)).filter(|&(_, w)| w > 0.0).map(|(v, _)| v).fold(0.0, f64::max)
}

/// Step cap `10 ceil(V0 n e^{1/alpha} / T0)`, at most `MAX_STEPS_CAP`.
fn default_cap(v0: f64, n: usize, alpha: f64, t0: f64) -> usize {
    let raw = 10.0 * (v0 * n as f64 * (1.0 / alpha).exp() / t0).ceil();
    (raw.min(tolerances::MAX_STEPS_CAP as f64) as usize).max(1)
}

/// Drives the state to velocities within `epsilon` of `v_star`, one axis at
/// a time, each axis by a boost pass followed by a reflect pass.
pub fn run_alignment(mu0: &EmpiricalMeasure, kernel: &InteractionKernel, cfg: &AlignmentConfig) -> Result<AlignmentReport> {
    let dim = mu0.dim();
    cfg.validate(dim)?;
    let mut state = mu0.clone();
    let mut t = 0.0;
    let mut steps = Vec::new();
    let mut frames = Vec::new();
    let mut trace = ConstraintTrace::default();
    let mut warnings = Vec::new();
    let mut snapshots = Vec::new();
    if cfg.record_snapshots {
        snapshots.push((0.0, state.clone()));
    }
    let mut outcome = Outcome::Aligned;
    let box0 = mu0.support_box();
    let extents_x: Vec<f64> = (0..dim).map(|a| box0.width(Coord::Position(a)).max(1.0) * 4.0).collect();
    let extents_v: Vec<f64> = (0..dim).map(|a| box0.width(Coord::Velocity(a)).max(cfg.epsilon)).collect();

    'axes: for axis in 0..dim {
        for pass in [Pass::Boost, Pass::Reflect] {
            let red = reduce_frame(&state, &cfg.v_star, cfg.epsilon, axis, pass, t)?;
            let frame_kernel = red.map.frame_kernel(kernel);
            if red.map.is_reflection() {
                frame_kernel.validate_sign(&extents_x, &extents_v, 2000, 17)?;
            }
            let pass_cfg = AlignmentConfig { epsilon: red.precision, ..cfg.clone() };
            let mut fstate = red.measure;
            let v0 = frame_height(&fstate, axis);
            let mut rec = FrameRecord {
                axis,
                pass,
                map: red.map,
                precision: red.precision,
                v0,
                steps: 0,
                horizon: 0.0,
                alpha: None,
                horizon_bound: 0.0,
                max_steps: cfg.max_steps.unwrap_or(0),
            };
            let mut eta_min = f64::INFINITY;
            loop {
                let Some(plan) = build_step_plan(&fstate, &pass_cfg, axis)? else { break };
                if rec.alpha.is_none() {
                    rec.alpha = Some(plan.alpha);
                    rec.horizon_bound = (1.0 / plan.alpha).exp() * plan.n as f64 * v0;
                    if cfg.max_steps.is_none() {
                        rec.max_steps = default_cap(v0, plan.n, plan.alpha, plan.t_len);
                    }
                }
                if rec.steps >= rec.max_steps {
                    outcome = Outcome::StepCapReached { axis, pass };
                    break;
                }
                let mass_scale = 12.0 * density_estimate(&fstate) * plan.delta * plan.v_height;
                if mass_scale < plan.c * (1.0 - tolerances::DENSITY_HISTOGRAM_SLACK) {
                    warnings.push(format!(
                        "step {}: 12 f delta V = {mass_scale:.4e} below c = {} (histogram estimate)",
                        steps.len(),
                        plan.c
                    ));
                }
                eta_min = eta_min.min(plan.eta);
                let out = match run_fundamental_step(&fstate, &frame_kernel, &plan, &cfg.integrator, t) {
                    Ok(o) => o,
                    Err(Error::ConstraintBreach { time, mass, limit }) => {
                        outcome = Outcome::ConstraintBreach { time, mass, limit };
                        break;
                    }
                    Err(e) => return Err(e),
                };
                let mut record = out.record;
                record.k = steps.len();
                record.pass = pass;
                steps.push(record);
                trace.extend(&out.trace);
                t += plan.t_len;
                rec.steps += 1;
                rec.horizon += plan.t_len;
                fstate = out.state;
                if cfg.record_snapshots {
                    snapshots.push((t, red.map.inverse(&fstate, t)));
                }
            }
            if eta_min.is_finite() {
                // Density growth estimate with the smallest eta of the pass.
                let f_bar = cfg.lipschitz * dim as f64 + 1.0 / eta_min;
                let pass_trace = trace.since(t - rec.horizon);
                if let Some(&d0) = pass_trace.density_sup.first() {
                    let t0 = pass_trace.times[0];
                    for (ti, di) in pass_trace.times.iter().zip(&pass_trace.density_sup) {
                        let bound = d0 * (f_bar * (ti - t0)).exp() * (1.0 + tolerances::DENSITY_HISTOGRAM_SLACK);
                        if *di > bound {
                            warnings.push(format!("t = {ti:.4}: density estimate {di:.4e} above growth bound {bound:.4e}"));
                            break;
                        }
                    }
                }
            }
            state = red.map.inverse(&fstate, t);
            frames.push(rec);
            if outcome != Outcome::Aligned {
                break 'axes;
            }
        }
    }

    let total_horizon: f64 = steps.iter().map(|s| s.plan.t_len).sum();
    let horizon_bound = frames.iter().map(|f| f.horizon_bound).sum();
    let mut report = AlignmentReport {
        steps,
        frames,
        trace,
        total_horizon,
        horizon_bound,
        outcome,
        terminated: false,
        final_state: state,
        snapshots,
        warnings,
    };
    report.terminated = report.outcome == Outcome::Aligned && report.final_spread(&cfg.v_star) <= cfg.epsilon;
    Ok(report)
}
