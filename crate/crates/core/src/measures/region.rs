use super::{Coord, EmpiricalMeasure};
use crate::error::{Error, Result};

/// A real interval with independent endpoint openness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: true, hi_closed: true }
    }

    pub fn open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: false, hi_closed: false }
    }

    /// `(lo, hi]`
    pub fn left_open(lo: f64, hi: f64) -> Self {
        Self { lo, hi, lo_closed: false, hi_closed: true }
    }

    pub fn contains(&self, s: f64) -> bool {
        let above = if self.lo_closed { s >= self.lo } else { s > self.lo };
        let below = if self.hi_closed { s <= self.hi } else { s < self.hi };
        above && below
    }

    fn is_well_formed(&self) -> bool {
        !self.lo.is_nan() && !self.hi.is_nan() && self.lo <= self.hi
    }
}

/// A product region of phase space; unrestricted coordinates are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    x: Vec<Option<Interval>>,
    v: Vec<Option<Interval>>,
}

impl Region {
    /// The whole phase space of dimension `dim`.
    pub fn everything(dim: usize) -> Self {
        Self { x: vec![None; dim], v: vec![None; dim] }
    }

    /// Restricts one coordinate.
    pub fn with(mut self, c: Coord, interval: Interval) -> Self {
        match c {
            Coord::Position(a) => self.x[a] = Some(interval),
            Coord::Velocity(a) => self.v[a] = Some(interval),
        }
        self
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn contains(&self, x: &[f64], v: &[f64]) -> bool {
        let ok = |iv: &Option<Interval>, s: f64| iv.map_or(true, |iv| iv.contains(s));
        self.x.iter().zip(x).all(|(iv, &s)| ok(iv, s)) && self.v.iter().zip(v).all(|(iv, &s)| ok(iv, s))
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.x.len() != dim || self.v.len() != dim {
            return Err(Error::Input(format!(
                "region has dimension {}, measure has {dim}",
                self.x.len()
            )));
        }
        for iv in self.x.iter().chain(&self.v).flatten() {
            if !iv.is_well_formed() {
                return Err(Error::Input(format!("interval [{}, {}] is not ordered", iv.lo, iv.hi)));
            }
        }
        Ok(())
    }
}

/// Total weight of particles inside `region`, honouring endpoint openness.
/// Summation runs in ascending particle order.
pub fn mass_in_box(mu: &EmpiricalMeasure, region: &Region) -> Result<f64> {
    region.validate(mu.dim())?;
    let mut m = 0.0;
    for i in 0..mu.len() {
        if region.contains(mu.position(i), mu.velocity(i)) {
            m += mu.weights()[i];
        }
    }
    Ok(m.min(1.0))
}
