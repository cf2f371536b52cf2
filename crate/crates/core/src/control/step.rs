use super::plan::{ControlField, FundamentalStepPlan};
use super::{predicted_height, Pass};
use crate::dynamics::{integrate_observed, IntegratorConfig, InteractionKernel};
use crate::error::{Error, Result};
use crate::measures::{estimate_density_sup, mass_in_box, Coord, EmpiricalMeasure};
use crate::tolerances;
use crate::verify::ConstraintTrace;

/// Measurements of one executed fundamental step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: usize,
    pub pass: Pass,
    /// Global time at which the step starts.
    pub t_start: f64,
    pub plan: FundamentalStepPlan,
    pub v_pred: f64,
    pub v_meas: f64,
    pub x_meas: f64,
    pub omega_mass_max: f64,
    pub u_sup: f64,
    /// Histogram density supremum at the start of the step.
    pub density_sup_start: f64,
    /// Largest growth of any uncontrolled axis' velocity range during the
    /// step, relative to its range at the start.
    pub idle_box_growth: f64,
}

/// State after a step plus its record and the constraint trace (global time).
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: EmpiricalMeasure,
    pub record: StepRecord,
    pub trace: ConstraintTrace,
}

/// Histogram resolution used for density monitoring: `floor((N / 20)^(1 / 2d))`
/// bins per phase-space axis, at least one.
pub(crate) fn histogram_bins(n_particles: usize, dim: usize) -> Vec<usize> {
    let per = ((n_particles as f64 / 20.0).powf(1.0 / (2 * dim) as f64).floor() as usize).max(1);
    vec![per; 2 * dim]
}

pub fn density_estimate(mu: &EmpiricalMeasure) -> f64 {
    // An undefined histogram (flat support) is recorded as 0.
    estimate_density_sup(mu, &histogram_bins(mu.len(), mu.dim())).map_or(0.0, |e| e.sup_density)
}

fn axis_range(mu: &EmpiricalMeasure, c: Coord) -> (f64, f64) {
    mu.marginal(c)
        .filter(|&(_, w)| w > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (s, _)| (lo.min(s), hi.max(s)))
}

/// Runs one fundamental step in the canonical frame, starting at global time
/// `t_start`.
///
/// The step is integrated on its own clock `[0, T]` so slot lookups are exact.
/// At every integrator checkpoint the mass of the active control set is
/// compared with `c + 2 / N`; a larger value aborts with a breach error.
pub fn run_fundamental_step(
    mu: &EmpiricalMeasure,
    kernel: &InteractionKernel,
    plan: &FundamentalStepPlan,
    integrator: &IntegratorConfig,
    t_start: f64,
) -> Result<StepOutcome> {
    plan.validate()?;
    let dim = mu.dim();
    let axis = plan.axis;
    let limit = plan.c + tolerances::SPARSITY_ATOMS / mu.len() as f64;
    let field = ControlField { plan, t0: 0.0 };
    let switches = plan.switch_times();
    let idle_start: Vec<(f64, f64)> = (0..dim).map(|a| axis_range(mu, Coord::Velocity(a))).collect();
    let density_start = density_estimate(mu);

    let mut trace = ConstraintTrace::default();
    let mut omega_max: f64 = 0.0;
    let mut u_sup: f64 = 0.0;
    let mut idle_growth: f64 = 0.0;
    let mut observe = |seg_start: f64, t: f64, state: &EmpiricalMeasure| -> Result<()> {
        let mut slots = vec![if integrator.snap_to_switches {
            plan.slot_at(seg_start)?
        } else {
            plan.slot_at(t.min(plan.t_len * (1.0 - 1e-12)))?
        }];
        // At a switch time the next slab is about to become active as well.
        if let Some(p) = switches.iter().position(|&s| s == t) {
            slots.push(p + 2);
        }
        let mut mass: f64 = 0.0;
        let mut u: f64 = 0.0;
        for &i in &slots {
            mass = mass.max(mass_in_box(state, &plan.omega(i, dim))?);
            for k in 0..state.len() {
                u = u.max(plan.bump(i, state.position(k)[axis], state.velocity(k)[axis]));
            }
        }
        for a in (0..dim).filter(|&a| a != axis) {
            let (lo, hi) = axis_range(state, Coord::Velocity(a));
            idle_growth = idle_growth.max(idle_start[a].0 - lo).max(hi - idle_start[a].1);
        }
        let height = axis_range(state, Coord::Velocity(axis)).1;
        trace.push(t_start + t, mass, u, height, density_estimate(state));
        omega_max = omega_max.max(mass);
        u_sup = u_sup.max(u);
        if mass > limit {
            return Err(Error::ConstraintBreach { time: t_start + t, mass, limit });
        }
        Ok(())
    };
    let end = integrate_observed(mu, kernel, Some(&field), 0.0, plan.t_len, integrator, &[], &mut |obs| {
        observe(obs.segment_start, obs.t, obs.state)
    })?;

    let record = StepRecord {
        k: 0,
        pass: Pass::Boost,
        t_start,
        plan: plan.clone(),
        v_pred: predicted_height(plan.v_height, plan.eta, plan.t_len, plan.lipschitz, plan.n),
        v_meas: axis_range(&end, Coord::Velocity(axis)).1,
        x_meas: axis_range(&end, Coord::Position(axis)).1,
        omega_mass_max: omega_max,
        u_sup,
        density_sup_start: density_start,
        idle_box_growth: idle_growth.max(0.0),
    };
    Ok(StepOutcome { state: end, record, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{build_step_plan, AlignmentConfig};
    use crate::measures::sampling::Sampler;
    use crate::measures::SupportBox;

    fn uniform_cloud(n: usize, seed: u64) -> EmpiricalMeasure {
        let b = SupportBox::new(vec![0.0], vec![1.0], vec![0.0], vec![1.0]).unwrap();
        Sampler::Uniform { bounds: b }.sample(n, seed).unwrap()
    }

    fn plan_for(mu: &EmpiricalMeasure, c: f64, l: f64) -> FundamentalStepPlan {
        let cfg = AlignmentConfig::new(c, 0.05, vec![0.0], l, IntegratorConfig::rk4(1e-3)).unwrap();
        build_step_plan(mu, &cfg, 0).unwrap().unwrap()
    }

    #[test]
    fn step_contracts_and_respects_sparsity() {
        let mu = uniform_cloud(400, 3);
        let kernel = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        let plan = plan_for(&mu, 0.4, kernel.lipschitz());
        let out = run_fundamental_step(&mu, &kernel, &plan, &IntegratorConfig::rk4(1e-3), 0.0).unwrap();
        let r = &out.record;
        assert!(r.v_meas <= r.v_pred + 1e-4, "{} > {}", r.v_meas, r.v_pred);
        assert!(r.x_meas <= plan.x_width + plan.t_len * plan.v_height + 1e-4);
        assert!(r.omega_mass_max <= 0.4 + 2.0 / 400.0);
        assert!(r.u_sup <= 1.0);
        assert_eq!(out.trace.len(), out.trace.times.len());
        assert!((out.trace.times.last().unwrap() - plan.t_len).abs() < 1e-15);
    }

    #[test]
    fn free_particle_in_core_brakes_at_unit_rate() {
        // No interaction, one slab covering everything: a particle that stays
        // in the core for its whole slot loses exactly T / n of velocity.
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 0.5, 1.0], vec![0.0, 0.8, 1.0]).unwrap();
        let kernel = InteractionKernel::constant(0.0).unwrap();
        let mut plan = plan_for(&mu, 1.0, 1.0);
        plan.partition = vec![0.0, 1.0, 5.0];
        plan.delta = 0.2;
        let out = run_fundamental_step(&mu, &kernel, &plan, &IntegratorConfig::rk4(1e-3), 0.0).unwrap();
        let dv = mu.velocities()[1] - out.state.velocities()[1];
        assert!((dv - plan.slot_len()).abs() < 1e-12, "{dv} vs {}", plan.slot_len());
    }

    #[test]
    fn nonpositive_velocities_are_left_alone() {
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 0.5, 1.0], vec![0.0, 0.0, 1.0]).unwrap();
        let kernel = InteractionKernel::constant(0.0).unwrap();
        let plan = plan_for(&mu, 1.0, 1.0);
        let out = run_fundamental_step(&mu, &kernel, &plan, &IntegratorConfig::rk4(1e-3), 0.0).unwrap();
        assert_eq!(&out.state.velocities()[..2], &[0.0, 0.0]);
        assert_eq!(&out.state.positions()[..2], &[0.0, 0.5]);
    }

    #[test]
    fn tight_budget_is_reported_as_breach() {
        let mu = uniform_cloud(200, 9);
        let kernel = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        let mut plan = plan_for(&mu, 0.4, kernel.lipschitz());
        // Pretend the budget were far smaller than the sets actually hold.
        plan.c = 0.05;
        let r = run_fundamental_step(&mu, &kernel, &plan, &IntegratorConfig::rk4(1e-3), 0.0);
        assert!(matches!(r, Err(Error::ConstraintBreach { .. })));
    }

    #[test]
    fn histogram_resolution() {
        assert_eq!(histogram_bins(2000, 1), vec![10, 10]);
        assert_eq!(histogram_bins(10, 1), vec![1, 1]);
        assert_eq!(histogram_bins(1600, 2), vec![2; 4]);
    }
}
