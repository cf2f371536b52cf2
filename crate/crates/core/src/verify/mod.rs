//! Runtime monitors and post-hoc checks for the proved inequalities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::control::{eval_control, AlignmentReport, FundamentalStepPlan, StepRecord};
use crate::dynamics::{integrate_observed, mean_field_force, simulate, IntegratorConfig, InteractionKernel};
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;
use crate::tolerances;

/// Time traces of the monitored quantities.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstraintTrace {
    pub times: Vec<f64>,
    pub omega_mass: Vec<f64>,
    pub u_sup: Vec<f64>,
    pub v_height: Vec<f64>,
    pub density_sup: Vec<f64>,
}

impl ConstraintTrace {
    pub fn push(&mut self, t: f64, omega_mass: f64, u_sup: f64, v_height: f64, density_sup: f64) {
        self.times.push(t);
        self.omega_mass.push(omega_mass);
        self.u_sup.push(u_sup);
        self.v_height.push(v_height);
        self.density_sup.push(density_sup);
    }

    pub fn extend(&mut self, other: &ConstraintTrace) {
        self.times.extend_from_slice(&other.times);
        self.omega_mass.extend_from_slice(&other.omega_mass);
        self.u_sup.extend_from_slice(&other.u_sup);
        self.v_height.extend_from_slice(&other.v_height);
        self.density_sup.extend_from_slice(&other.density_sup);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Entries with time at least `t0`.
    pub fn since(&self, t0: f64) -> ConstraintTrace {
        let s = self.times.partition_point(|&t| t < t0 - 1e-12);
        ConstraintTrace {
            times: self.times[s..].to_vec(),
            omega_mass: self.omega_mass[s..].to_vec(),
            u_sup: self.u_sup[s..].to_vec(),
            v_height: self.v_height[s..].to_vec(),
            density_sup: self.density_sup[s..].to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if [self.omega_mass.len(), self.u_sup.len(), self.v_height.len(), self.density_sup.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::Invariant("trace columns differ in length".into()));
        }
        let entries = self.omega_mass.iter().chain(&self.u_sup).chain(&self.density_sup);
        if entries.clone().any(|s| !(s.is_finite() && *s >= 0.0)) || self.v_height.iter().any(|s| !s.is_finite()) {
            return Err(Error::Invariant("trace holds a negative or non-finite entry".into()));
        }
        Ok(())
    }
}

/// Machine-readable result of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    /// Worst observed value of the checked quantity.
    pub worst: f64,
    pub threshold: f64,
    /// Where the worst value occurred.
    pub witness: String,
}

impl CheckOutcome {
    fn at_most(name: &str, worst: f64, threshold: f64, witness: String) -> Self {
        Self { name: name.into(), pass: worst <= threshold, worst, threshold, witness }
    }
}

fn argmax(values: impl Iterator<Item = f64>) -> Option<(usize, f64)> {
    values.enumerate().fold(None, |best, (i, v)| match best {
        Some((_, b)) if b >= v => best,
        _ => Some((i, v)),
    })
}

/// Control-set mass never above `c + 2 / N`.
pub fn check_sparsity(trace: &ConstraintTrace, c: f64, n_particles: usize) -> CheckOutcome {
    let limit = c + tolerances::SPARSITY_ATOMS / n_particles as f64;
    match argmax(trace.omega_mass.iter().copied()) {
        Some((i, m)) => CheckOutcome::at_most("sparsity", m, limit, format!("t = {}", trace.times[i])),
        None => CheckOutcome::at_most("sparsity", 0.0, limit, "empty trace".into()),
    }
}

/// Samples the control at random `(t, x, v)` around the control sets and at
/// random core points. Passes when every value is at most 1 in norm and
/// every core value is exactly 1.
pub fn check_amplitude(plan: &FundamentalStepPlan, samples: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_lo = plan.partition[0] - 3.0 * plan.delta;
    let x_hi = plan.partition[plan.n] + 3.0 * plan.delta;
    let (v_lo, v_hi) = (-plan.eta, plan.v_height + 2.0 * plan.eta);
    let mut worst: f64 = 0.0;
    let mut witness = String::new();
    let mut core_ok = true;
    for s in 0..samples {
        let t = rng.random::<f64>() * plan.t_len;
        let (x, v) = if s % 4 == 0 {
            // Core sample of the active slab.
            let i = plan.slot_at(t).unwrap_or(1);
            let (cx, cv) = plan.core(i);
            (cx.lo + rng.random::<f64>() * (cx.hi - cx.lo), cv.lo + rng.random::<f64>() * (cv.hi - cv.lo))
        } else {
            (x_lo + rng.random::<f64>() * (x_hi - x_lo), v_lo + rng.random::<f64>() * (v_hi - v_lo))
        };
        let (mut xs, mut vs) = (vec![0.0; plan.axis + 1], vec![0.0; plan.axis + 1]);
        xs[plan.axis] = x;
        vs[plan.axis] = v;
        let Ok(u) = eval_control(plan, t, &xs, &vs) else { continue };
        let norm = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        if s % 4 == 0 && norm != 1.0 {
            core_ok = false;
            witness = format!("core point t = {t}, x = {x}, v = {v} gives {norm}");
        }
        if norm > worst {
            worst = norm;
            if core_ok {
                witness = format!("t = {t}, x = {x}, v = {v}");
            }
        }
    }
    let mut out = CheckOutcome::at_most("amplitude", worst, 1.0, witness);
    out.pass &= core_ok;
    out
}

/// Finite-difference slopes of the control at fixed times, over random pairs
/// at mixed scales and diagonal pairs around the core corners.
pub fn check_control_lipschitz(plan: &FundamentalStepPlan, pairs: usize, seed: u64) -> CheckOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bound = plan.lipschitz_bound();
    let x_lo = plan.partition[0] - 3.0 * plan.delta;
    let x_hi = plan.partition[plan.n] + 3.0 * plan.delta;
    let (v_lo, v_hi) = (-plan.eta, plan.v_height + 2.0 * plan.eta);
    let mut worst: f64 = 0.0;
    let mut witness = String::new();
    for s in 0..pairs {
        let t = rng.random::<f64>() * plan.t_len;
        let Ok(i) = plan.slot_at(t) else { continue };
        let (x, v) = if s % 2 == 0 {
            (x_lo + rng.random::<f64>() * (x_hi - x_lo), v_lo + rng.random::<f64>() * (v_hi - v_lo))
        } else {
            let (cx, cv) = plan.core(i);
            let x = if rng.random::<bool>() { cx.hi } else { cx.lo };
            let v = if rng.random::<bool>() { cv.hi } else { cv.lo };
            (x + (rng.random::<f64>() - 0.5) * plan.delta, v + (rng.random::<f64>() - 0.5) * plan.eta)
        };
        let scale = 10f64.powf(-4.0 * rng.random::<f64>());
        let dx = scale * plan.delta * (2.0 * rng.random::<f64>() - 1.0);
        let dv = scale * plan.eta * (2.0 * rng.random::<f64>() - 1.0);
        let dist = (dx * dx + dv * dv).sqrt();
        if dist == 0.0 {
            continue;
        }
        let a = plan.bump(i, x, v);
        let b = plan.bump(i, x + dx, v + dv);
        let slope = (a - b).abs() / dist;
        if slope > worst {
            worst = slope;
            witness = format!("slot {i}, (x, v) = ({x}, {v}), step ({dx}, {dv})");
        }
    }
    CheckOutcome::at_most("control_lipschitz", worst, bound + tolerances::CONTROL_LIPSCHITZ, witness)
}

/// Measured height and width after a step against their predictions.
pub fn check_step_contraction(record: &StepRecord) -> CheckOutcome {
    let p = &record.plan;
    let over_v = record.v_meas - record.v_pred;
    let over_x = record.x_meas - (p.x_width + p.t_len * p.v_height);
    let worst = over_v.max(over_x);
    let witness = format!(
        "step {}: V {} vs {}, X {} vs {}",
        record.k,
        record.v_meas,
        record.v_pred,
        record.x_meas,
        p.x_width + p.t_len * p.v_height
    );
    CheckOutcome::at_most("step_contraction", worst, tolerances::STEP_CONTRACTION.min(tolerances::STEP_POSITION_GROWTH), witness)
}

/// Histogram density never above `f(0) e^{F t} (1 + slack)`.
pub fn check_density_growth(trace: &ConstraintTrace, f_bar: f64) -> CheckOutcome {
    let Some(&d0) = trace.density_sup.first() else {
        return CheckOutcome::at_most("density_growth", 0.0, 1.0, "empty trace".into());
    };
    let t0 = trace.times[0];
    let ratios = trace
        .times
        .iter()
        .zip(&trace.density_sup)
        .map(|(t, d)| if d0 > 0.0 { d / (d0 * (f_bar * (t - t0)).exp()) } else { 0.0 });
    let (i, r) = argmax(ratios).unwrap_or((0, 0.0));
    CheckOutcome::at_most(
        "density_growth",
        r,
        1.0 + tolerances::DENSITY_HISTOGRAM_SLACK,
        format!("t = {}", trace.times[i]),
    )
}

/// `div_v (psi * mu)` at `(x, v)` by central differences of step `h`.
pub fn divergence_at(mu: &EmpiricalMeasure, kernel: &InteractionKernel, x: &[f64], v: &[f64], h: f64) -> Result<f64> {
    let mut div = 0.0;
    let mut vp = v.to_vec();
    for a in 0..v.len() {
        vp[a] = v[a] + h;
        let up = mean_field_force(mu, kernel, x, &vp)?[a];
        vp[a] = v[a] - h;
        let down = mean_field_force(mu, kernel, x, &vp)?[a];
        vp[a] = v[a];
        div += (up - down) / (2.0 * h);
    }
    Ok(div)
}

fn sample_in_hull(mu: &EmpiricalMeasure, points: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let b = mu.support_box();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = mu.dim();
    (0..points)
        .map(|_| {
            let x = (0..d).map(|a| b.x_lo[a] + rng.random::<f64>() * (b.x_hi[a] - b.x_lo[a])).collect();
            let v = (0..d).map(|a| b.v_lo[a] + rng.random::<f64>() * (b.v_hi[a] - b.v_lo[a])).collect();
            (x, v)
        })
        .collect()
}

/// Largest sampled `|div_v (psi * mu)|` over the support hull against `L d`.
pub fn check_divergence_bound(mu: &EmpiricalMeasure, kernel: &InteractionKernel, points: usize, seed: u64) -> Result<CheckOutcome> {
    let h = tolerances::DIVERGENCE_STEP;
    let mut worst: f64 = 0.0;
    let mut witness = String::new();
    for (x, v) in sample_in_hull(mu, points, seed) {
        let d = divergence_at(mu, kernel, &x, &v, h)?.abs();
        if d > worst {
            worst = d;
            witness = format!("x = {x:?}, v = {v:?}");
        }
    }
    let threshold = kernel.lipschitz() * mu.dim() as f64 + tolerances::DIVERGENCE;
    Ok(CheckOutcome::at_most("divergence_bound", worst, threshold, witness))
}

/// Halving the difference step must move the sampled maximum by less than
/// `10 h`.
pub fn check_divergence_consistency(mu: &EmpiricalMeasure, kernel: &InteractionKernel, points: usize, seed: u64) -> Result<CheckOutcome> {
    let h = tolerances::DIVERGENCE_STEP;
    let pts = sample_in_hull(mu, points, seed);
    let max_at = |h: f64| -> Result<f64> {
        pts.iter().try_fold(0.0f64, |m, (x, v)| Ok(m.max(divergence_at(mu, kernel, x, v, h)?.abs())))
    };
    let change = (max_at(h)? - max_at(h / 2.0)?).abs();
    Ok(CheckOutcome::at_most("divergence_consistency", change, 10.0 * h, format!("h = {h}")))
}

/// Simulates `mu0` and its copy moved by `x -> x + y`, `v -> v + w`, undoes
/// the motion `x -> x - y - t w`, `v -> v - w` and compares particle by
/// particle.
pub fn check_equivariance(
    mu0: &EmpiricalMeasure,
    kernel: &InteractionKernel,
    y: &[f64],
    w: &[f64],
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<CheckOutcome> {
    let base = simulate(mu0, kernel, None, 0.0, horizon, cfg, &[])?;
    let moved = simulate(&mu0.translated(y, w, 0.0), kernel, None, 0.0, horizon, cfg, &[])?;
    let neg_y: Vec<f64> = y.iter().map(|s| -s).collect();
    let neg_w: Vec<f64> = w.iter().map(|s| -s).collect();
    let back = moved.last().translated(&neg_y, &neg_w, horizon);
    let a = base.last();
    let worst = back
        .positions()
        .iter()
        .chain(back.velocities())
        .zip(a.positions().iter().chain(a.velocities()))
        .map(|(p, q)| (p - q).abs())
        .fold(0.0, f64::max);
    Ok(CheckOutcome::at_most("equivariance", worst, tolerances::EQUIVARIANCE, format!("y = {y:?}, w = {w:?}")))
}

/// Uncontrolled evolution: the largest growth of the velocity box over all
/// integrator checkpoints up to `horizon`.
pub fn check_support_invariance(
    mu0: &EmpiricalMeasure,
    kernel: &InteractionKernel,
    horizon: f64,
    cfg: &IntegratorConfig,
) -> Result<CheckOutcome> {
    let b0 = mu0.support_box();
    let mut worst: f64 = 0.0;
    let mut witness = String::new();
    integrate_observed(mu0, kernel, None, 0.0, horizon, cfg, &[], &mut |obs| {
        let b = obs.state.support_box();
        for a in 0..mu0.dim() {
            let g = (b0.v_lo[a] - b.v_lo[a]).max(b.v_hi[a] - b0.v_hi[a]);
            if g > worst {
                worst = g;
                witness = format!("t = {}, axis {a}", obs.t);
            }
        }
        Ok(())
    })?;
    Ok(CheckOutcome::at_most("support_invariance", worst.max(0.0), tolerances::SUPPORT_INVARIANCE, witness))
}

/// `(e^{-1/alpha} / n) sum_{k <= K} T_k <= V0` for every prefix of every pass.
pub fn check_partial_sums(report: &AlignmentReport) -> CheckOutcome {
    let mut worst = f64::NEG_INFINITY;
    let mut witness = String::new();
    for f in &report.frames {
        let Some(alpha) = f.alpha else { continue };
        let mut sum = 0.0;
        for s in report.steps.iter().filter(|s| s.plan.axis == f.axis && s.pass == f.pass) {
            if s.plan.v_height < s.plan.epsilon / 2.0 {
                break;
            }
            sum += s.plan.t_len;
            let lhs = (-1.0 / alpha).exp() / s.plan.n as f64 * sum;
            if lhs - f.v0 > worst {
                worst = lhs - f.v0;
                witness = format!("step {}: {lhs} vs V0 = {}", s.k, f.v0);
            }
        }
    }
    if worst == f64::NEG_INFINITY {
        worst = 0.0;
        witness = "no steps".into();
    }
    CheckOutcome::at_most("partial_sums", worst, tolerances::PARTIAL_SUM, witness)
}

/// Total horizon against `sum over passes of e^{1/alpha} n V0`; `worst` is the
/// slack ratio.
pub fn check_horizon_bound(report: &AlignmentReport) -> CheckOutcome {
    let ratio = if report.horizon_bound > 0.0 { report.total_horizon / report.horizon_bound } else { 0.0 };
    CheckOutcome::at_most(
        "horizon_bound",
        ratio,
        1.0,
        format!("T = {} bound = {}", report.total_horizon, report.horizon_bound),
    )
}

/// Velocity ranges of uncontrolled axes never grow during a step.
pub fn check_idle_axes(report: &AlignmentReport) -> CheckOutcome {
    match argmax(report.steps.iter().map(|s| s.idle_box_growth)) {
        Some((i, g)) => CheckOutcome::at_most("idle_axis_invariance", g, tolerances::SUPPORT_INVARIANCE, format!("step {i}")),
        None => CheckOutcome::at_most("idle_axis_invariance", 0.0, tolerances::SUPPORT_INVARIANCE, "no steps".into()),
    }
}

/// Final velocities within `epsilon` of `v_star`.
pub fn check_alignment(report: &AlignmentReport, v_star: &[f64], epsilon: f64) -> CheckOutcome {
    let mut out = CheckOutcome::at_most("alignment", report.final_spread(v_star), epsilon, format!("{:?}", report.outcome));
    out.pass &= report.terminated;
    out
}

/// The step-level checks of a run, one outcome per check (worst over steps).
pub fn check_steps(report: &AlignmentReport, samples: usize, seed: u64) -> Vec<CheckOutcome> {
    let mut merged: Vec<CheckOutcome> = Vec::new();
    let mut fold = |o: CheckOutcome| match merged.iter_mut().find(|m| m.name == o.name) {
        Some(m) => {
            if o.worst > m.worst || (!o.pass && m.pass) {
                let pass = m.pass && o.pass;
                *m = o;
                m.pass = pass;
            } else {
                m.pass &= o.pass;
            }
        }
        None => merged.push(o),
    };
    for (k, s) in report.steps.iter().enumerate() {
        fold(check_amplitude(&s.plan, samples, seed.wrapping_add(k as u64)));
        fold(check_control_lipschitz(&s.plan, samples, seed.wrapping_add(k as u64)));
        fold(check_step_contraction(s));
    }
    merged
}

#[cfg(test)]
mod tests;
