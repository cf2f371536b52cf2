use super::*;
use crate::control::{build_step_plan, AlignmentConfig, Pass};
use crate::measures::sampling::Sampler;
use crate::measures::SupportBox;

fn cloud(dim: usize, n: usize, seed: u64) -> EmpiricalMeasure {
    let b = SupportBox::new(vec![0.0; dim], vec![1.0; dim], vec![0.0; dim], vec![1.0; dim]).unwrap();
    Sampler::Uniform { bounds: b }.sample(n, seed).unwrap()
}

fn plan() -> FundamentalStepPlan {
    let mu = cloud(1, 300, 1);
    let cfg = AlignmentConfig::new(0.4, 0.05, vec![0.0], 1.2, IntegratorConfig::rk4(1e-3)).unwrap();
    build_step_plan(&mu, &cfg, 0).unwrap().unwrap()
}

#[test]
fn empty_trace_is_sparse() {
    let o = check_sparsity(&ConstraintTrace::default(), 0.4, 100);
    assert!(o.pass);
    assert_eq!(o.worst, 0.0);
}

#[test]
fn injected_mass_fails_at_its_time() {
    let mut tr = ConstraintTrace::default();
    tr.push(0.0, 0.3, 1.0, 1.0, 1.0);
    tr.push(0.5, 1.0, 1.0, 1.0, 1.0);
    tr.push(1.0, 0.2, 1.0, 1.0, 1.0);
    let o = check_sparsity(&tr, 0.4, 100);
    assert!(!o.pass);
    assert_eq!(o.witness, "t = 0.5");
}

#[test]
fn trace_validation() {
    let mut tr = ConstraintTrace::default();
    tr.push(0.0, 0.3, 1.0, 1.0, 1.0);
    tr.validate().unwrap();
    tr.u_sup.push(1.0);
    assert!(tr.validate().is_err());
    let mut tr = ConstraintTrace::default();
    tr.push(0.0, -0.1, 1.0, 1.0, 1.0);
    assert!(tr.validate().is_err());
}

#[test]
fn plans_have_unit_amplitude() {
    let o = check_amplitude(&plan(), 10_000, 3);
    assert!(o.pass, "{o:?}");
    assert_eq!(o.worst, 1.0);
}

#[test]
fn control_slopes_within_bound() {
    let p = plan();
    let o = check_control_lipschitz(&p, 10_000, 4);
    assert!(o.pass, "{o:?}");
    // The ramps are steep enough that sampling comes close to the bound.
    assert!(o.worst > 0.5 * p.lipschitz_bound());
}

#[test]
fn product_bump_would_fail_the_slope_check() {
    // Sanity check of the checker: the product of the two ramps is steeper
    // than max(1/delta, 1/eta) near the core corner, by sqrt(2) when the two
    // ramp widths agree.
    let mut p = plan();
    p.delta = p.eta;
    let prod = |x: f64, v: f64| {
        let dist = (p.partition[0] - x).max(x - p.partition[1]).max(0.0);
        let rx = (2.0 - dist / p.delta).clamp(0.0, 1.0);
        let rv = ((p.v_height + p.eta - v) / p.eta).clamp(0.0, 1.0);
        rx * rv
    };
    let (x0, v0) = (p.partition[1] + p.delta, p.v_height);
    // Step along the gradient direction (1/delta, 1/eta).
    let (gx, gv) = (1.0 / p.delta, 1.0 / p.eta);
    let h = 1e-4 * p.delta.min(p.eta).powi(2);
    let slope = (prod(x0, v0) - prod(x0 + h * gx, v0 + h * gv)).abs() / (h * (gx * gx + gv * gv).sqrt());
    assert!(slope > p.lipschitz_bound() * 1.4);
    assert!(check_control_lipschitz(&p, 10_000, 5).pass);
}

fn record(v_meas: f64, x_meas: f64) -> StepRecord {
    let p = plan();
    StepRecord {
        k: 0,
        pass: Pass::Boost,
        t_start: 0.0,
        v_pred: 0.9,
        v_meas,
        x_meas,
        omega_mass_max: 0.0,
        u_sup: 1.0,
        density_sup_start: 1.0,
        idle_box_growth: 0.0,
        plan: p,
    }
}

#[test]
fn contraction_check() {
    let r = record(0.9, 1.0);
    assert!(check_step_contraction(&r).pass);
    assert!(!check_step_contraction(&record(0.91, 1.0)).pass);
    let far = r.plan.x_width + r.plan.t_len * r.plan.v_height + 1e-3;
    assert!(!check_step_contraction(&record(0.5, far)).pass);
}

#[test]
fn free_streaming_width_grows_by_t_vmax() {
    let mu = cloud(1, 50, 2);
    let k = InteractionKernel::constant(0.0).unwrap();
    let t = 0.3;
    let out = simulate(&mu, &k, None, 0.0, t, &IntegratorConfig::rk4(1e-3), &[]).unwrap();
    let b0 = mu.support_box();
    let b1 = out.last().support_box();
    // The fastest particle is not necessarily the rightmost, so the width
    // bound X + T V is an upper bound; the rightmost moves by its own speed.
    assert!(b1.x_hi[0] <= b0.x_hi[0] + t * b0.v_hi[0] + 1e-14);
}

#[test]
fn density_growth_check() {
    let mut tr = ConstraintTrace::default();
    tr.push(0.0, 0.0, 0.0, 1.0, 2.0);
    tr.push(1.0, 0.0, 0.0, 1.0, 2.0);
    assert!(check_density_growth(&tr, 0.0).pass);
    tr.push(2.0, 0.0, 0.0, 1.0, 50.0);
    assert!(!check_density_growth(&tr, 1.0).pass);
    assert!(check_density_growth(&tr, 2.0).pass);
}

#[test]
fn free_streaming_keeps_density_within_slack() {
    let mu = cloud(1, 4000, 6);
    let k = InteractionKernel::constant(0.0).unwrap();
    let traj = simulate(&mu, &k, None, 0.0, 1.0, &IntegratorConfig::rk4(0.05), &[0.25, 0.5, 0.75]).unwrap();
    let mut tr = ConstraintTrace::default();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        tr.push(*t, 0.0, 0.0, 1.0, crate::control::density_estimate(s));
    }
    let o = check_density_growth(&tr, 0.0);
    assert!(o.pass, "{o:?}");
}

#[test]
fn constant_kernel_divergence_is_minus_k_d() {
    for dim in [1, 2] {
        let mu = cloud(dim, 40, 7);
        let k = InteractionKernel::constant(0.7).unwrap();
        let x = vec![0.3; dim];
        let v = vec![0.1; dim];
        let div = divergence_at(&mu, &k, &x, &v, 1e-5).unwrap();
        assert!((div + 0.7 * dim as f64).abs() < 1e-9, "{div}");
        assert!(check_divergence_bound(&mu, &k, 50, 1).unwrap().pass);
    }
}

#[test]
fn single_particle_divergence_is_bounded() {
    let mu = EmpiricalMeasure::uniform(1, vec![0.5], vec![0.5]).unwrap();
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    let o = check_divergence_bound(&mu, &k, 10, 2).unwrap();
    assert!(o.pass && o.worst <= 1.0 + 1e-6);
}

#[test]
fn understated_lipschitz_fails_divergence() {
    let mu = cloud(2, 40, 8);
    let k = InteractionKernel::constant(2.0).unwrap().with_lipschitz(0.5).unwrap();
    assert!(!check_divergence_bound(&mu, &k, 20, 3).unwrap().pass);
}

#[test]
fn divergence_differences_are_consistent() {
    let mu = cloud(1, 60, 9);
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    assert!(check_divergence_consistency(&mu, &k, 30, 4).unwrap().pass);
}

#[test]
fn equivariance_under_shift_and_boost() {
    let mu = cloud(1, 40, 10);
    let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
    let cfg = IntegratorConfig::rk4(1e-3);
    let zero = check_equivariance(&mu, &k, &[0.0], &[0.0], 0.5, &cfg).unwrap();
    assert_eq!(zero.worst, 0.0);
    assert!(check_equivariance(&mu, &k, &[1.0], &[0.0], 0.5, &cfg).unwrap().pass);
    assert!(check_equivariance(&mu, &k, &[0.0], &[1.0], 0.5, &cfg).unwrap().pass);
}

#[test]
fn uncontrolled_velocity_box_does_not_grow() {
    let mu = cloud(2, 60, 11);
    let k = InteractionKernel::power_law(1.0, 1.0, 2.0).unwrap();
    let o = check_support_invariance(&mu, &k, 1.0, &IntegratorConfig::rk4(1e-2)).unwrap();
    assert!(o.pass, "{o:?}");
}
