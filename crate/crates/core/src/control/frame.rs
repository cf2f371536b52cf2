use crate::dynamics::InteractionKernel;
use crate::error::{Error, Result};
use crate::measures::{Coord, EmpiricalMeasure};

/// The two one-sided passes run along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    /// Brake velocities above `v*` down towards `v* + eps / sqrt(d)`.
    Boost,
    /// Mirror the axis and lift velocities below `v*` towards
    /// `v* - eps / sqrt(d)`.
    Reflect,
}

impl Pass {
    pub fn name(self) -> &'static str {
        match self {
            Pass::Boost => "boost",
            Pass::Reflect => "reflect",
        }
    }
}

/// Affine change of frame along one axis:
/// `x' = s (x - y - (t - t0) w)`, `v' = s (v - w)` with `s = +-1`.
/// Other axes are untouched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMap {
    pub axis: usize,
    pub sign: f64,
    pub anchor: f64,
    pub boost: f64,
    pub t0: f64,
}

impl FrameMap {
    pub fn identity(axis: usize) -> Self {
        Self { axis, sign: 1.0, anchor: 0.0, boost: 0.0, t0: 0.0 }
    }

    pub fn is_reflection(&self) -> bool {
        self.sign < 0.0
    }

    pub fn forward_point(&self, t: f64, x: &mut [f64], v: &mut [f64]) {
        let a = self.axis;
        x[a] = self.sign * (x[a] - self.anchor - (t - self.t0) * self.boost);
        v[a] = self.sign * (v[a] - self.boost);
    }

    pub fn inverse_point(&self, t: f64, x: &mut [f64], v: &mut [f64]) {
        let a = self.axis;
        x[a] = self.sign * x[a] + self.anchor + (t - self.t0) * self.boost;
        v[a] = self.sign * v[a] + self.boost;
    }

    fn map_measure(&self, mu: &EmpiricalMeasure, t: f64, forward: bool) -> EmpiricalMeasure {
        let d = mu.dim();
        let mut out = mu.clone();
        let (xs, vs) = out.state_mut();
        for (x, v) in xs.chunks_mut(d).zip(vs.chunks_mut(d)) {
            if forward {
                self.forward_point(t, x, v);
            } else {
                self.inverse_point(t, x, v);
            }
        }
        out
    }

    /// The state observed at time `t` expressed in this frame.
    pub fn forward(&self, mu: &EmpiricalMeasure, t: f64) -> EmpiricalMeasure {
        self.map_measure(mu, t, true)
    }

    /// A frame state at time `t` mapped back to the original frame.
    pub fn inverse(&self, mu: &EmpiricalMeasure, t: f64) -> EmpiricalMeasure {
        self.map_measure(mu, t, false)
    }

    /// The interaction kernel governing the dynamics in this frame.
    pub fn frame_kernel(&self, kernel: &InteractionKernel) -> InteractionKernel {
        if self.is_reflection() {
            kernel.reflected(self.axis)
        } else {
            kernel.clone()
        }
    }
}

/// Result of a frame reduction: the measure in the canonical frame, the map
/// and the velocity precision the pass must reach in that frame.
#[derive(Debug, Clone)]
pub struct FrameReduction {
    pub measure: EmpiricalMeasure,
    pub map: FrameMap,
    pub precision: f64,
}

/// Moves `mu` (observed at time `t`) into the canonical frame of `pass`
/// along `axis`: axis velocities non-negative with left edge at the boost,
/// positions starting at 0.
///
/// The boost pass uses `w = min(min v_j, v*_j)` and precision
/// `v*_j + eps / sqrt(d) - w`. The reflect pass mirrors about
/// `w = max(max v_j, v*_j + eps / sqrt(d))` and needs precision
/// `w - v*_j + eps / sqrt(d)`.
pub fn reduce_frame(
    mu: &EmpiricalMeasure,
    v_star: &[f64],
    epsilon: f64,
    axis: usize,
    pass: Pass,
    t: f64,
) -> Result<FrameReduction> {
    let d = mu.dim();
    if v_star.len() != d {
        return Err(Error::Config(format!("target velocity has {} components, dimension is {d}", v_star.len())));
    }
    if axis >= d {
        return Err(Error::Config(format!("axis {axis} out of range for dimension {d}")));
    }
    let half = epsilon / (d as f64).sqrt();
    let b = mu.support_box();
    let (x_lo, x_hi) = (b.lo(Coord::Position(axis)), b.hi(Coord::Position(axis)));
    let (v_lo, v_hi) = (b.lo(Coord::Velocity(axis)), b.hi(Coord::Velocity(axis)));
    let vs = v_star[axis];
    let (map, precision) = match pass {
        Pass::Boost => {
            let w = v_lo.min(vs);
            (FrameMap { axis, sign: 1.0, anchor: x_lo, boost: w, t0: t }, vs + half - w)
        }
        Pass::Reflect => {
            let w = v_hi.max(vs + half);
            (FrameMap { axis, sign: -1.0, anchor: x_hi, boost: w, t0: t }, w - vs + half)
        }
    };
    Ok(FrameReduction { measure: map.forward(mu, t), map, precision })
}
