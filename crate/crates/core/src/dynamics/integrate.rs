use super::force::{all_forces, ForceScratch};
use super::kernel::InteractionKernel;
use crate::error::{Error, Result};
use crate::measures::EmpiricalMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    ExplicitEuler,
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::ExplicitEuler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Largest allowed step; actual steps divide each segment evenly.
    pub dt_max: f64,
    /// Split steps at control switch times so no step straddles a jump.
    pub snap_to_switches: bool,
}

impl IntegratorConfig {
    pub fn rk4(dt_max: f64) -> Self {
        Self { scheme: Scheme::Rk4, dt_max, snap_to_switches: true }
    }

    pub fn euler(dt_max: f64) -> Self {
        Self { scheme: Scheme::ExplicitEuler, dt_max, snap_to_switches: true }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt_max.is_finite() && self.dt_max > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt_max)));
        }
        Ok(())
    }
}

/// An external velocity control `u(t, x, v)`, piecewise smooth in time.
pub trait VelocityControl {
    /// Times at which the control may jump.
    fn switch_times(&self) -> Vec<f64>;

    /// Adds `u` at every particle to `acc`. `slot_time` selects the time
    /// piece; the integrator passes the start of the current segment when
    /// steps are snapped and the stage time otherwise.
    fn add_accel(&self, slot_time: f64, t: f64, dim: usize, x: &[f64], v: &[f64], acc: &mut [f64]) -> Result<()>;
}

/// A spatially uniform control.
#[derive(Debug, Clone)]
pub struct ConstantControl(pub Vec<f64>);

impl VelocityControl for ConstantControl {
    fn switch_times(&self) -> Vec<f64> {
        Vec::new()
    }

    fn add_accel(&self, _: f64, _: f64, dim: usize, _: &[f64], _: &[f64], acc: &mut [f64]) -> Result<()> {
        for (k, a) in acc.iter_mut().enumerate() {
            *a += self.0[k % dim];
        }
        Ok(())
    }
}

/// State handed to observers after every accepted step.
pub struct Observation<'a> {
    /// Start of the segment the step belongs to.
    pub segment_start: f64,
    pub t: f64,
    pub state: &'a EmpiricalMeasure,
}

struct Rhs<'a> {
    kernel: &'a InteractionKernel,
    control: Option<&'a dyn VelocityControl>,
    weights: Vec<f64>,
    dim: usize,
    scratch: ForceScratch,
}

impl Rhs<'_> {
    fn accel(&mut self, slot_time: f64, t: f64, x: &[f64], v: &[f64], out: &mut [f64]) -> Result<()> {
        all_forces(self.dim, x, v, &self.weights, self.kernel, &mut self.scratch, out)?;
        if let Some(c) = self.control {
            c.add_accel(slot_time, t, self.dim, x, v, out)?;
        }
        Ok(())
    }
}

#[derive(Default)]
struct Buffers {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    xs: Vec<f64>,
    vs: Vec<f64>,
    v2: Vec<f64>,
    v3: Vec<f64>,
    v4: Vec<f64>,
}

fn step(
    rhs: &mut Rhs<'_>,
    scheme: Scheme,
    snap: Option<f64>,
    t: f64,
    h: f64,
    x: &mut [f64],
    v: &mut [f64],
    b: &mut Buffers,
) -> Result<()> {
    let slot = |s: f64| snap.unwrap_or(s);
    let m = x.len();
    for buf in [&mut b.k1, &mut b.k2, &mut b.k3, &mut b.k4, &mut b.xs, &mut b.vs, &mut b.v2, &mut b.v3, &mut b.v4] {
        buf.resize(m, 0.0);
    }
    match scheme {
        Scheme::ExplicitEuler => {
            rhs.accel(slot(t), t, x, v, &mut b.k1)?;
            for k in 0..m {
                x[k] += h * v[k];
                v[k] += h * b.k1[k];
            }
        }
        Scheme::Rk4 => {
            rhs.accel(slot(t), t, x, v, &mut b.k1)?;
            for k in 0..m {
                b.xs[k] = x[k] + 0.5 * h * v[k];
                b.v2[k] = v[k] + 0.5 * h * b.k1[k];
            }
            rhs.accel(slot(t + 0.5 * h), t + 0.5 * h, &b.xs, &b.v2, &mut b.k2)?;
            for k in 0..m {
                b.xs[k] = x[k] + 0.5 * h * b.v2[k];
                b.v3[k] = v[k] + 0.5 * h * b.k2[k];
            }
            rhs.accel(slot(t + 0.5 * h), t + 0.5 * h, &b.xs, &b.v3, &mut b.k3)?;
            for k in 0..m {
                b.xs[k] = x[k] + h * b.v3[k];
                b.v4[k] = v[k] + h * b.k3[k];
            }
            rhs.accel(slot(t + h), t + h, &b.xs, &b.v4, &mut b.k4)?;
            for k in 0..m {
                x[k] += h / 6.0 * (v[k] + 2.0 * b.v2[k] + 2.0 * b.v3[k] + b.v4[k]);
                v[k] += h / 6.0 * (b.k1[k] + 2.0 * b.k2[k] + 2.0 * b.k3[k] + b.k4[k]);
            }
        }
    }
    if x.iter().chain(v.iter()).any(|s| !s.is_finite()) {
        return Err(Error::Divergence { time: t + h });
    }
    Ok(())
}

/// Segment boundaries of `[t0, t1]`: the ends, the requested breakpoints and,
/// when snapping, the control switch times, all strictly inside.
fn segment_edges(t0: f64, t1: f64, breakpoints: &[f64], switches: &[f64]) -> Vec<f64> {
    let tol = 1e-12 * (1.0 + t1.abs());
    let mut e: Vec<f64> = breakpoints.iter().chain(switches).copied().filter(|&s| s > t0 + tol && s < t1 - tol).collect();
    e.push(t0);
    e.push(t1);
    e.sort_by(|a, b| a.total_cmp(b));
    e.dedup_by(|a, b| (*a - *b).abs() <= tol);
    e
}

/// Integrates the controlled kinetic system from `t0` to `t1`.
///
/// The observer sees the initial state and every state after a step, and may
/// abort the run by returning an error.
#[allow(clippy::too_many_arguments)]
pub fn integrate_observed(
    mu0: &EmpiricalMeasure,
    kernel: &InteractionKernel,
    control: Option<&dyn VelocityControl>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    breakpoints: &[f64],
    observer: &mut dyn FnMut(&Observation<'_>) -> Result<()>,
) -> Result<EmpiricalMeasure> {
    cfg.validate()?;
    if !(t1 >= t0) {
        return Err(Error::Config(format!("end time {t1} precedes start time {t0}")));
    }
    let switches = match (control, cfg.snap_to_switches) {
        (Some(c), true) => c.switch_times(),
        _ => Vec::new(),
    };
    let edges = segment_edges(t0, t1, breakpoints, &switches);
    let mut state = mu0.clone();
    let mut rhs = Rhs { kernel, control, weights: mu0.weights().to_vec(), dim: mu0.dim(), scratch: ForceScratch::default() };
    let mut bufs = Buffers::default();
    observer(&Observation { segment_start: t0, t: t0, state: &state })?;
    for seg in edges.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let steps = (((b - a) / cfg.dt_max) - 1e-9).ceil().max(1.0) as usize;
        let h = (b - a) / steps as f64;
        let snap = cfg.snap_to_switches.then_some(a);
        for s in 0..steps {
            let t = a + s as f64 * h;
            let (x, v) = state.state_mut();
            step(&mut rhs, cfg.scheme, snap, t, h, x, v, &mut bufs)?;
            let t_next = if s + 1 == steps { b } else { a + (s + 1) as f64 * h };
            observer(&Observation { segment_start: a, t: t_next, state: &state })?;
        }
    }
    Ok(state)
}

/// States sampled at chosen times.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<EmpiricalMeasure>,
}

impl Trajectory {
    pub fn last(&self) -> &EmpiricalMeasure {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Integrates and records the state at `t0`, at every checkpoint inside
/// `(t0, t1)` and at `t1`. Checkpoints are hit exactly.
pub fn simulate(
    mu0: &EmpiricalMeasure,
    kernel: &InteractionKernel,
    control: Option<&dyn VelocityControl>,
    t0: f64,
    t1: f64,
    cfg: &IntegratorConfig,
    checkpoints: &[f64],
) -> Result<Trajectory> {
    let wanted = segment_edges(t0, t1, checkpoints, &[]);
    let mut traj = Trajectory { times: Vec::new(), states: Vec::new() };
    let mut next = 0;
    integrate_observed(mu0, kernel, control, t0, t1, cfg, &wanted, &mut |obs| {
        if next < wanted.len() && obs.t == wanted[next] {
            traj.times.push(obs.t);
            traj.states.push(obs.state.clone());
            next += 1;
        }
        Ok(())
    })?;
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::force::mean_field_force;

    fn pair(x: [f64; 2], v: [f64; 2]) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(1, x.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn unit_kernel_pair_spread_decays_exponentially() {
        // With xi = 1 and weights 1/2 the velocity gap solves g' = -g.
        let mu = pair([0.0, 0.0], [0.0, 1.0]);
        let k = InteractionKernel::constant(1.0).unwrap();
        let out = simulate(&mu, &k, None, 0.0, 1.0, &IntegratorConfig::rk4(1e-3), &[]).unwrap();
        let v = out.last().velocities();
        assert!(((v[1] - v[0]) - (-1.0f64).exp()).abs() < 1e-10);
        assert!(((v[1] - v[0]) - 0.3679).abs() < 1e-4);
    }

    #[test]
    fn free_streaming_without_interaction() {
        let mu = pair([0.2, -1.0], [0.5, -2.0]);
        let k = InteractionKernel::constant(0.0).unwrap();
        let out = simulate(&mu, &k, None, 0.0, 2.0, &IntegratorConfig::euler(0.1), &[]).unwrap();
        let s = out.last();
        assert!((s.positions()[0] - 1.2).abs() < 1e-14 && (s.positions()[1] + 5.0).abs() < 1e-14);
        assert_eq!(s.velocities(), mu.velocities());
    }

    #[test]
    fn constant_deceleration() {
        let mu = pair([0.0, 1.0], [1.0, 1.0]);
        let k = InteractionKernel::power_law(1.0, 1.0, 1.0).unwrap();
        let u = ConstantControl(vec![-1.0]);
        let out = simulate(&mu, &k, Some(&u), 0.0, 0.5, &IntegratorConfig::rk4(0.01), &[]).unwrap();
        let s = out.last();
        assert!((s.velocities()[0] - 0.5).abs() < 1e-13);
        assert!((s.positions()[0] - (0.5 - 0.125)).abs() < 1e-13);
    }

    #[test]
    fn checkpoints_are_hit_exactly() {
        let mu = pair([0.0, 1.0], [0.0, 1.0]);
        let k = InteractionKernel::constant(1.0).unwrap();
        let out = simulate(&mu, &k, None, 0.0, 1.0, &IntegratorConfig::rk4(0.03), &[0.25, 0.5, 2.0]).unwrap();
        assert_eq!(out.times, vec![0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn blow_up_is_reported() {
        let mu = pair([0.0, 1.0], [0.0, 1.0]);
        let k = InteractionKernel::constant(1.0).unwrap();
        let u = ConstantControl(vec![f64::INFINITY]);
        let r = simulate(&mu, &k, Some(&u), 0.0, 1.0, &IntegratorConfig::euler(0.1), &[]);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    fn error_at(cfg: IntegratorConfig) -> f64 {
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 0.3, 1.0], vec![0.4, -0.2, 1.0]).unwrap();
        let k = InteractionKernel::power_law(1.0, 1.0, 2.0).unwrap();
        let fine = simulate(&mu, &k, None, 0.0, 1.0, &IntegratorConfig::rk4(1e-4), &[]).unwrap();
        let coarse = simulate(&mu, &k, None, 0.0, 1.0, &cfg, &[]).unwrap();
        fine.last()
            .velocities()
            .iter()
            .chain(fine.last().positions())
            .zip(coarse.last().velocities().iter().chain(coarse.last().positions()))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn observed_convergence_orders() {
        let order = |scheme: fn(f64) -> IntegratorConfig, h: f64| {
            (error_at(scheme(h)) / error_at(scheme(h / 2.0))).log2()
        };
        assert!(order(IntegratorConfig::euler, 0.02) >= 0.95);
        assert!(order(IntegratorConfig::rk4, 0.1) >= 3.5);
    }

    #[test]
    fn particles_follow_the_mean_field() {
        // Finite difference of the velocity over one tiny Euler step equals
        // the mean-field force evaluated on the measure itself.
        let mu = EmpiricalMeasure::uniform(1, vec![0.0, 0.3, 1.0, 0.6], vec![0.4, -0.2, 1.0, 0.0]).unwrap();
        let k = InteractionKernel::power_law(1.0, 1.0, 2.0).unwrap();
        let h = 1e-7;
        let out = simulate(&mu, &k, None, 0.0, h, &IntegratorConfig::euler(h), &[]).unwrap();
        for i in 0..mu.len() {
            let f = mean_field_force(&mu, &k, mu.position(i), mu.velocity(i)).unwrap()[0];
            let fd = (out.last().velocities()[i] - mu.velocities()[i]) / h;
            assert!((f - fd).abs() < 1e-6);
        }
    }
}
