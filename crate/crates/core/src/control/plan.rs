use super::{compute_delta, compute_n, select_parameters, AlignmentConfig};
use crate::dynamics::VelocityControl;
use crate::error::{Error, Result};
use crate::measures::{quantile_partition, Coord, EmpiricalMeasure, Interval, Region};
use crate::tolerances;

/// One fundamental step in the canonical frame of its axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FundamentalStepPlan {
    pub axis: usize,
    pub n: usize,
    pub partition: Vec<f64>,
    pub delta: f64,
    pub eta: f64,
    pub t_len: f64,
    /// Velocity height `V_k` at the start of the step.
    pub v_height: f64,
    /// Position width `X_k` at the start of the step.
    pub x_width: f64,
    pub alpha: f64,
    pub lipschitz: f64,
    pub c: f64,
    pub epsilon: f64,
}

impl FundamentalStepPlan {
    /// Checks the internal consistency of a hand-built or deserialised plan.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invariant(m));
        if self.n == 0 || self.partition.len() != self.n + 1 {
            return bad(format!("{} partition points for {} slabs", self.partition.len(), self.n));
        }
        if self.partition.windows(2).any(|w| !(w[0] <= w[1])) {
            return bad("partition is not sorted".into());
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad(format!("delta = {} is not positive", self.delta));
        }
        if !(self.eta > 0.0 && self.eta < self.v_height) {
            return bad(format!("eta = {} outside (0, V = {})", self.eta, self.v_height));
        }
        if !(self.t_len > 0.0 && self.t_len * self.v_height <= self.delta * (1.0 + 1e-12)) {
            return bad(format!("T = {} violates 0 < T <= delta / V", self.t_len));
        }
        Ok(())
    }

    pub fn slot_len(&self) -> f64 {
        self.t_len / self.n as f64
    }

    /// Active slab (1-based) at time `t` of the step; slot `i` covers
    /// `[(i - 1) T / n, i T / n)`.
    pub fn slot_at(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0 && t < self.t_len) {
            return Err(Error::Slot { t, horizon: self.t_len });
        }
        // Switch times are produced as `i * (T / n)`; snap quotients that land
        // within rounding of an integer so they select the new slot.
        let q = t / self.slot_len();
        let r = q.round();
        let k = if (q - r).abs() <= 1e-9 * (1.0 + r) { r } else { q.floor() };
        Ok((k as usize + 1).min(self.n))
    }

    /// Start time of slot `i`.
    pub fn slot_start(&self, i: usize) -> f64 {
        (i - 1) as f64 * self.slot_len()
    }

    /// The control set `[x[i-1] - 2 delta, x[i] + 2 delta] x [0, V + eta]` of
    /// slab `i`, with the other coordinates unrestricted.
    pub fn omega(&self, i: usize, dim: usize) -> Region {
        Region::everything(dim)
            .with(
                Coord::Position(self.axis),
                Interval::closed(self.partition[i - 1] - 2.0 * self.delta, self.partition[i] + 2.0 * self.delta),
            )
            .with(Coord::Velocity(self.axis), Interval::closed(0.0, self.v_height + self.eta))
    }

    /// The core `[x[i-1] - delta, x[i] + delta] x [eta, V]` where the bump is 1.
    pub fn core(&self, i: usize) -> (Interval, Interval) {
        (
            Interval::closed(self.partition[i - 1] - self.delta, self.partition[i] + self.delta),
            Interval::closed(self.eta, self.v_height),
        )
    }

    /// Bump value of slab `i` at axis coordinates `(x, v)`.
    ///
    /// Both one-dimensional trapezoids are combined by their minimum, which
    /// is 1 exactly on the core, 0 outside the control set, and has slope at
    /// most `max(1 / delta, 1 / eta)` in any direction.
    #[inline]
    pub fn bump(&self, i: usize, x: f64, v: f64) -> f64 {
        let (a, b) = (self.partition[i - 1], self.partition[i]);
        let dist = (a - x).max(x - b).max(0.0);
        let rx = (2.0 - dist / self.delta).clamp(0.0, 1.0);
        let (eta, top) = (self.eta, self.v_height);
        let rv = if v <= 0.0 {
            0.0
        } else if v < eta {
            v / eta
        } else if v <= top {
            1.0
        } else {
            ((top + eta - v) / eta).clamp(0.0, 1.0)
        };
        rx.min(rv)
    }

    /// Slope bound of the control in `(x, v)`.
    pub fn lipschitz_bound(&self) -> f64 {
        (1.0 / self.delta).max(1.0 / self.eta)
    }

    /// Switch times `i T / n`, `i = 1 .. n - 1`, relative to the step start.
    pub fn switch_times(&self) -> Vec<f64> {
        (1..self.n).map(|i| i as f64 * self.slot_len()).collect()
    }
}

/// Builds the plan of the next fundamental step from the current state in
/// the canonical frame. Returns `None` when the velocity height is already
/// below the precision.
pub fn build_step_plan(mu: &EmpiricalMeasure, cfg: &AlignmentConfig, axis: usize) -> Result<Option<FundamentalStepPlan>> {
    cfg.validate(mu.dim())?;
    let b = mu.support_box();
    let v_lo = b.lo(Coord::Velocity(axis));
    if v_lo < -tolerances::FRAME_FLOOR {
        return Err(Error::Frame(format!("velocity {v_lo} below 0 on axis {axis}; reduce the frame first")));
    }
    let v_height = b.hi(Coord::Velocity(axis)).max(0.0);
    if v_height < cfg.epsilon {
        return Ok(None);
    }
    let x_width = b.hi(Coord::Position(axis));
    let n = compute_n(cfg.c)?;
    let partition = quantile_partition(mu, Coord::Position(axis), cfg.c / 2.0, n)?;
    let cap = (b.hi(Coord::Position(axis)) - b.lo(Coord::Position(axis))).max(0.0);
    let delta = compute_delta(mu, &partition, cfg.c, axis, cap)?;
    if !(delta > 0.0) {
        // Locate the slab that is already too heavy for the report.
        let slab = partition
            .windows(2)
            .position(|w| {
                let r = Region::everything(mu.dim()).with(Coord::Position(axis), Interval::closed(w[0], w[1]));
                crate::measures::mass_in_box(mu, &r).map_or(false, |m| m > cfg.c + tolerances::MASS_COMPARE)
            })
            .map_or(0, |s| s + 1);
        return Err(Error::DegenerateConcentration { slab });
    }
    let p = select_parameters(v_height, delta, cfg.lipschitz, n, cfg.epsilon)?;
    let plan = FundamentalStepPlan {
        axis,
        n,
        partition,
        delta,
        eta: p.eta,
        t_len: p.t_len,
        v_height,
        x_width,
        alpha: p.alpha,
        lipschitz: cfg.lipschitz,
        c: cfg.c,
        epsilon: cfg.epsilon,
    };
    plan.validate()?;
    Ok(Some(plan))
}

/// Control value at time `t` of the step: `-bump` on the controlled axis,
/// zero elsewhere.
pub fn eval_control(plan: &FundamentalStepPlan, t: f64, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let i = plan.slot_at(t)?;
    let mut u = vec![0.0; x.len()];
    u[plan.axis] = -plan.bump(i, x[plan.axis], v[plan.axis]);
    Ok(u)
}

/// A plan placed on the integrator's clock, starting at `t0`.
#[derive(Debug, Clone)]
pub struct ControlField<'a> {
    pub plan: &'a FundamentalStepPlan,
    pub t0: f64,
}

impl ControlField<'_> {
    pub fn eval(&self, t: f64, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        eval_control(self.plan, t - self.t0, x, v)
    }
}

impl VelocityControl for ControlField<'_> {
    fn switch_times(&self) -> Vec<f64> {
        self.plan.switch_times().into_iter().map(|s| s + self.t0).collect()
    }

    fn add_accel(&self, slot_time: f64, _: f64, dim: usize, x: &[f64], v: &[f64], acc: &mut [f64]) -> Result<()> {
        let i = self.plan.slot_at(slot_time - self.t0)?;
        let a = self.plan.axis;
        for k in 0..acc.len() / dim {
            acc[k * dim + a] -= self.plan.bump(i, x[k * dim + a], v[k * dim + a]);
        }
        Ok(())
    }
}
