//! Phase-space probability measures represented as weighted particle clouds.
//!
//! A measure lives on `R^d x R^d`: every particle carries a position, a
//! velocity and a non-negative weight, and the weights sum to one. All
//! queries are pure functions of an immutable snapshot.

mod density;
mod io;
mod partition;
mod region;
pub mod sampling;
mod wasserstein;

pub use density::{estimate_density_sup, DensityEstimate};
pub(crate) use io::fmt_real;
pub use io::{read_csv, read_csv_with_time, write_csv, write_csv_with_time};
pub use partition::quantile_partition;
pub use region::{mass_in_box, Interval, Region};
pub use wasserstein::{wasserstein1_1d, wasserstein1_lp};

use crate::error::{Error, Result};
use crate::tolerances;

/// Selects one scalar coordinate of phase space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Coord {
    Position(usize),
    Velocity(usize),
}

impl Coord {
    pub fn axis(self) -> usize {
        match self {
            Coord::Position(a) | Coord::Velocity(a) => a,
        }
    }
}

impl std::fmt::Display for Coord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coord::Position(a) => write!(f, "x_{a}"),
            Coord::Velocity(a) => write!(f, "v_{a}"),
        }
    }
}

/// A weighted particle cloud in phase space.
///
/// Positions and velocities are stored flat, particle-major: the `d`
/// components of particle `i` occupy `[i * d, (i + 1) * d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    dim: usize,
    positions: Vec<f64>,
    velocities: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    pub fn new(
        dim: usize,
        positions: Vec<f64>,
        velocities: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidMeasure("dimension must be positive".into()));
        }
        let n = weights.len();
        if n == 0 {
            return Err(Error::InvalidMeasure("measure has no particles".into()));
        }
        if positions.len() != n * dim || velocities.len() != n * dim {
            return Err(Error::InvalidMeasure(format!(
                "length mismatch: {} weights, {} position and {} velocity coordinates for d = {dim}",
                n,
                positions.len(),
                velocities.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidMeasure(format!("invalid weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > tolerances::WEIGHT_SUM {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        if positions.iter().chain(&velocities).any(|c| !c.is_finite()) {
            return Err(Error::InvalidMeasure("non-finite coordinate".into()));
        }
        Ok(Self { dim, positions, velocities, weights })
    }

    /// Equal weights `1/N`.
    pub fn uniform(dim: usize, positions: Vec<f64>, velocities: Vec<f64>) -> Result<Self> {
        let n = positions.len() / dim.max(1);
        Self::new(dim, positions, velocities, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn velocities(&self) -> &[f64] {
        &self.velocities
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.velocities[i * self.dim..(i + 1) * self.dim]
    }

    pub(crate) fn state_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.positions, &mut self.velocities)
    }

    /// Value of one scalar coordinate for particle `i`.
    pub fn coord(&self, i: usize, c: Coord) -> f64 {
        match c {
            Coord::Position(a) => self.positions[i * self.dim + a],
            Coord::Velocity(a) => self.velocities[i * self.dim + a],
        }
    }

    /// Iterator over `(coordinate, weight)` for one scalar marginal.
    pub fn marginal(&self, c: Coord) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.len()).map(move |i| (self.coord(i, c), self.weights[i]))
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Applies `x -> x + shift_x + t * shift_v`, `v -> v + shift_v`.
    pub fn translated(&self, shift_x: &[f64], shift_v: &[f64], t: f64) -> Self {
        let d = self.dim;
        let mut out = self.clone();
        for (k, x) in out.positions.iter_mut().enumerate() {
            *x += shift_x[k % d] + t * shift_v[k % d];
        }
        for (k, v) in out.velocities.iter_mut().enumerate() {
            *v += shift_v[k % d];
        }
        out
    }

    /// Compact-support query: component-wise extrema over weighted particles.
    pub fn support_box(&self) -> SupportBox {
        support_box(self)
    }
}

/// Axis-aligned bounding box of the support in phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportBox {
    pub x_lo: Vec<f64>,
    pub x_hi: Vec<f64>,
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
}

impl SupportBox {
    pub fn new(x_lo: Vec<f64>, x_hi: Vec<f64>, v_lo: Vec<f64>, v_hi: Vec<f64>) -> Result<Self> {
        let d = x_lo.len();
        if x_hi.len() != d || v_lo.len() != d || v_hi.len() != d {
            return Err(Error::Input("support box components differ in length".into()));
        }
        let ordered = x_lo.iter().zip(&x_hi).chain(v_lo.iter().zip(&v_hi)).all(|(a, b)| a <= b);
        if !ordered {
            return Err(Error::Input("support box bounds are not ordered".into()));
        }
        Ok(Self { x_lo, x_hi, v_lo, v_hi })
    }

    pub fn dim(&self) -> usize {
        self.x_lo.len()
    }

    pub fn lo(&self, c: Coord) -> f64 {
        match c {
            Coord::Position(a) => self.x_lo[a],
            Coord::Velocity(a) => self.v_lo[a],
        }
    }

    pub fn hi(&self, c: Coord) -> f64 {
        match c {
            Coord::Position(a) => self.x_hi[a],
            Coord::Velocity(a) => self.v_hi[a],
        }
    }

    pub fn width(&self, c: Coord) -> f64 {
        self.hi(c) - self.lo(c)
    }

    /// Euclidean diameter of the velocity box.
    pub fn velocity_diameter(&self) -> f64 {
        self.v_lo.iter().zip(&self.v_hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64], v: &[f64]) -> bool {
        (0..self.dim()).all(|a| {
            self.x_lo[a] <= x[a] && x[a] <= self.x_hi[a] && self.v_lo[a] <= v[a] && v[a] <= self.v_hi[a]
        })
    }
}

/// Component-wise min/max over particles with positive weight.
pub fn support_box(mu: &EmpiricalMeasure) -> SupportBox {
    let d = mu.dim();
    let mut b = SupportBox {
        x_lo: vec![f64::INFINITY; d],
        x_hi: vec![f64::NEG_INFINITY; d],
        v_lo: vec![f64::INFINITY; d],
        v_hi: vec![f64::NEG_INFINITY; d],
    };
    let mut any = false;
    for i in 0..mu.len() {
        if mu.weights[i] <= 0.0 {
            continue;
        }
        any = true;
        for a in 0..d {
            let x = mu.positions[i * d + a];
            let v = mu.velocities[i * d + a];
            b.x_lo[a] = b.x_lo[a].min(x);
            b.x_hi[a] = b.x_hi[a].max(x);
            b.v_lo[a] = b.v_lo[a].min(v);
            b.v_hi[a] = b.v_hi[a].max(v);
        }
    }
    debug_assert!(any, "valid measures carry positive mass");
    b
}
