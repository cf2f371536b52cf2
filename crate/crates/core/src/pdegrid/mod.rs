//! Conservative finite-volume solver for the controlled kinetic equation
//! `f_t + v f_x + ((Psi[f] + u) f)_v = 0` in one space dimension.
//!
//! Densities live on a uniform `(x, v)` grid. Time stepping is first-order
//! upwind with dimensional splitting; see [`grid_step`].

mod scheme;
#[cfg(test)]
mod tests;

use std::io::Write;

pub use scheme::{grid_advance, grid_step, interaction_field, GridRun, GridRunConfig};

use crate::control::FundamentalStepPlan;
use crate::error::{Error, Result};
use crate::measures::{fmt_real, wasserstein1_1d, Coord, EmpiricalMeasure, SupportBox};
use crate::tolerances;

/// Share of the base span added on each side of a step grid to absorb the
/// numerical diffusion of the upwind scheme.
const DIFFUSION_BUFFER: f64 = 0.25;

/// Extra cells on each side, on top of the proportional buffer; the upwind
/// tails above the support floor reach a roughly fixed number of cells.
const DIFFUSION_CELLS: usize = 12;

/// Geometry of a phase grid: `nx` by `nv` cells over `[x_lo, x_hi] x [v_lo, v_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
    pub nx: usize,
    pub nv: usize,
}

impl GridSpec {
    pub fn new(x_lo: f64, x_hi: f64, v_lo: f64, v_hi: f64, nx: usize, nv: usize) -> Result<Self> {
        if ![x_lo, x_hi, v_lo, v_hi].iter().all(|b| b.is_finite()) || !(x_lo < x_hi && v_lo < v_hi) {
            return Err(Error::Config(format!("bad grid bounds [{x_lo}, {x_hi}] x [{v_lo}, {v_hi}]")));
        }
        let min_cells = 2 * tolerances::GRID_BOUNDARY_CELLS + 1;
        if nx < min_cells || nv < min_cells {
            return Err(Error::Config(format!("grid needs at least {min_cells} cells per axis, got {nx} x {nv}")));
        }
        Ok(Self { x_lo, x_hi, v_lo, v_hi, nx, nv })
    }

    /// Grid around a one-dimensional support box, widened by the given
    /// margins and then by the diffusion buffer. Needs more than
    /// `4 DIFFUSION_CELLS` cells per axis.
    pub fn covering(support: &SupportBox, x_margin: f64, v_margin: f64, nx: usize, nv: usize) -> Result<Self> {
        if support.dim() != 1 {
            return Err(Error::Config(format!("phase grids are one-dimensional, support has d = {}", support.dim())));
        }
        let (x_lo, x_hi) = (support.x_lo[0] - x_margin, support.x_hi[0] + x_margin);
        let (v_lo, v_hi) = (support.v_lo[0] - v_margin, support.v_hi[0] + v_margin);
        if nx <= 4 * DIFFUSION_CELLS || nv <= 4 * DIFFUSION_CELLS {
            return Err(Error::Config(format!("step grids need more than {} cells per axis", 4 * DIFFUSION_CELLS)));
        }
        // Total width W = (1 + 2 b) w + 2 K W / n.
        let widen = |lo: f64, hi: f64, n: usize| {
            let base = (1.0 + 2.0 * DIFFUSION_BUFFER) * (hi - lo).max(f64::MIN_POSITIVE);
            let total = base / (1.0 - 2.0 * DIFFUSION_CELLS as f64 / n as f64);
            let pad = 0.5 * (total - (hi - lo));
            (lo - pad, hi + pad)
        };
        let (x0, x1) = widen(x_lo, x_hi, nx);
        let (v0, v1) = widen(v_lo, v_hi, nv);
        Self::new(x0, x1, v0, v1, nx, nv)
    }

    /// Grid for one fundamental step: margin `T V` on `x` and
    /// `2 delta + eta` on `v`.
    pub fn for_step(support: &SupportBox, plan: &FundamentalStepPlan, nx: usize, nv: usize) -> Result<Self> {
        Self::covering(support, plan.t_len * plan.v_height, 2.0 * plan.delta + plan.eta, nx, nv)
    }

    pub fn dx(&self) -> f64 {
        (self.x_hi - self.x_lo) / self.nx as f64
    }

    pub fn dv(&self) -> f64 {
        (self.v_hi - self.v_lo) / self.nv as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dv()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_lo + (i as f64 + 0.5) * self.dx()
    }

    pub fn v_center(&self, j: usize) -> f64 {
        self.v_lo + (j as f64 + 0.5) * self.dv()
    }

    /// Lower face of velocity cell `j`; `j = nv` is the top boundary.
    pub fn v_face(&self, j: usize) -> f64 {
        self.v_lo + j as f64 * self.dv()
    }

    pub fn cells(&self) -> usize {
        self.nx * self.nv
    }
}

/// Compensated summation.
pub(crate) fn neumaier_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for x in values {
        let t = s + x;
        if s.abs() >= x.abs() {
            c += (s - t) + x;
        } else {
            c += (x - t) + s;
        }
        s = t;
    }
    s + c
}

/// Cell densities on a [`GridSpec`], stored row by row in `x` (`i * nv + j`).
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    spec: GridSpec,
    density: Vec<f64>,
    outflow: f64,
}

fn overlap(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

impl PhaseGrid {
    pub fn from_cells(spec: GridSpec, density: Vec<f64>) -> Result<Self> {
        if density.len() != spec.cells() {
            return Err(Error::Config(format!("{} densities for {} cells", density.len(), spec.cells())));
        }
        if let Some(k) = density.iter().position(|f| !(f.is_finite() && *f >= 0.0)) {
            return Err(Error::NegativeDensity { i: k / spec.nv, j: k % spec.nv, value: density[k] });
        }
        Ok(Self { spec, density, outflow: 0.0 })
    }

    /// Uniform probability density on `[x.0, x.1] x [v.0, v.1]`; every cell
    /// receives its exact overlap with the box.
    pub fn from_uniform_box(spec: GridSpec, x: (f64, f64), v: (f64, f64)) -> Result<Self> {
        if !(x.0 < x.1 && v.0 < v.1) {
            return Err(Error::Config(format!("empty box {x:?} x {v:?}")));
        }
        let area = (x.1 - x.0) * (v.1 - v.0);
        let dx = spec.dx();
        let wx: Vec<f64> = (0..spec.nx)
            .map(|i| overlap(x, (spec.x_lo + i as f64 * dx, spec.x_lo + (i + 1) as f64 * dx)))
            .collect();
        let wv: Vec<f64> = (0..spec.nv).map(|j| overlap(v, (spec.v_face(j), spec.v_face(j + 1)))).collect();
        let covered = neumaier_sum(wx.iter().copied()) * neumaier_sum(wv.iter().copied());
        if (covered - area).abs() > 1e-12 * area {
            return Err(Error::Config(format!("box {x:?} x {v:?} is not inside the grid")));
        }
        let vol = spec.cell_volume();
        let density = wx.iter().flat_map(|a| wv.iter().map(move |b| a * b / (area * vol))).collect();
        Self::from_cells(spec, density)
    }

    /// Deposits every particle's weight into the cell containing it.
    pub fn deposit(spec: GridSpec, mu: &EmpiricalMeasure) -> Result<Self> {
        if mu.dim() != 1 {
            return Err(Error::Config(format!("phase grids are one-dimensional, measure has d = {}", mu.dim())));
        }
        let vol = spec.cell_volume();
        let mut density = vec![0.0; spec.cells()];
        for k in 0..mu.len() {
            let (x, v) = (mu.position(k)[0], mu.velocity(k)[0]);
            let i = ((x - spec.x_lo) / spec.dx()).floor();
            let j = ((v - spec.v_lo) / spec.dv()).floor();
            if !(i >= 0.0 && j >= 0.0 && (i as usize) < spec.nx && (j as usize) < spec.nv) {
                return Err(Error::Config(format!("particle ({x}, {v}) lies outside the grid")));
            }
            density[i as usize * spec.nv + j as usize] += mu.weights()[k] / vol;
        }
        Self::from_cells(spec, density)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.density[i * self.spec.nv + j]
    }

    pub fn densities(&self) -> &[f64] {
        &self.density
    }

    pub(crate) fn densities_mut(&mut self) -> &mut [f64] {
        &mut self.density
    }

    /// Mass that has left through the boundary so far.
    pub fn outflow(&self) -> f64 {
        self.outflow
    }

    pub(crate) fn add_outflow(&mut self, m: f64) {
        self.outflow += m;
    }

    pub fn total_mass(&self) -> f64 {
        let vol = self.spec.cell_volume();
        neumaier_sum(self.density.iter().map(|f| f * vol))
    }

    pub fn min_density(&self) -> f64 {
        self.density.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mass per `x` column.
    pub fn x_marginal(&self) -> Vec<f64> {
        let vol = self.spec.cell_volume();
        self.density.chunks(self.spec.nv).map(|row| neumaier_sum(row.iter().map(|f| f * vol))).collect()
    }

    /// Mass per `v` row.
    pub fn v_marginal(&self) -> Vec<f64> {
        let (nx, nv, vol) = (self.spec.nx, self.spec.nv, self.spec.cell_volume());
        (0..nv).map(|j| neumaier_sum((0..nx).map(|i| self.density[i * nv + j] * vol))).collect()
    }

    /// Index ranges `(i_lo, i_hi, j_lo, j_hi)` of cells with density above
    /// the support floor.
    pub fn occupied(&self) -> Option<(usize, usize, usize, usize)> {
        let nv = self.spec.nv;
        let mut r: Option<(usize, usize, usize, usize)> = None;
        for (k, &f) in self.density.iter().enumerate() {
            if f > tolerances::GRID_SUPPORT_FLOOR {
                let (i, j) = (k / nv, k % nv);
                r = Some(match r {
                    None => (i, i, j, j),
                    Some((a, b, c, d)) => (a.min(i), b.max(i), c.min(j), d.max(j)),
                });
            }
        }
        r
    }

    /// True when occupied cells come within the boundary margin.
    pub fn near_boundary(&self) -> bool {
        let m = tolerances::GRID_BOUNDARY_CELLS;
        self.occupied().is_some_and(|(a, b, c, d)| {
            a < m || c < m || b + m >= self.spec.nx || d + m >= self.spec.nv
        })
    }

    /// One atom per non-empty cell at its centre, normalised to unit mass.
    pub fn to_measure(&self) -> Result<EmpiricalMeasure> {
        let vol = self.spec.cell_volume();
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("grid carries no mass".into()));
        }
        let (mut xs, mut vs, mut ws) = (Vec::new(), Vec::new(), Vec::new());
        for (k, &f) in self.density.iter().enumerate() {
            if f > 0.0 {
                xs.push(self.spec.x_center(k / self.spec.nv));
                vs.push(self.spec.v_center(k % self.spec.nv));
                ws.push(f * vol / total);
            }
        }
        EmpiricalMeasure::new(1, xs, vs, ws)
    }

    /// `n` equal-weight particles placed at cell centres, each cell receiving
    /// its largest-remainder quota of its mass share.
    pub fn quota_sample(&self, n: usize) -> Result<EmpiricalMeasure> {
        if n == 0 {
            return Err(Error::Config("quota sample needs at least one particle".into()));
        }
        let vol = self.spec.cell_volume();
        let total = self.total_mass();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("grid carries no mass".into()));
        }
        let share: Vec<f64> = self.density.iter().map(|f| f * vol / total * n as f64).collect();
        let mut quota: Vec<usize> = share.iter().map(|s| s.floor() as usize).collect();
        let mut rest: Vec<usize> = (0..share.len()).collect();
        rest.sort_by(|&a, &b| (share[b] - share[b].floor()).total_cmp(&(share[a] - share[a].floor())).then(a.cmp(&b)));
        let missing = n.saturating_sub(quota.iter().sum());
        for &k in rest.iter().take(missing) {
            quota[k] += 1;
        }
        let (mut xs, mut vs) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (k, &q) in quota.iter().enumerate() {
            for _ in 0..q {
                xs.push(self.spec.x_center(k / self.spec.nv));
                vs.push(self.spec.v_center(k % self.spec.nv));
            }
        }
        EmpiricalMeasure::uniform(1, xs, vs)
    }

    /// Snapshot as CSV rows `i,j,x_center,v_center,density`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["i", "j", "x_center", "v_center", "density"])?;
        for i in 0..self.spec.nx {
            for j in 0..self.spec.nv {
                w.write_record([
                    i.to_string(),
                    j.to_string(),
                    fmt_real(self.spec.x_center(i)),
                    fmt_real(self.spec.v_center(j)),
                    fmt_real(self.density(i, j)),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Marginal W1 distances between a grid solution and a particle cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalDiscrepancy {
    pub w1_x: f64,
    pub w1_v: f64,
}

impl MarginalDiscrepancy {
    pub fn max(&self) -> f64 {
        self.w1_x.max(self.w1_v)
    }
}

/// Compares the grid at time `t_grid` with particles at `t_particles`,
/// treating every grid cell as an atom at its centre.
pub fn grid_vs_particle(
    grid: &PhaseGrid,
    t_grid: f64,
    particles: &EmpiricalMeasure,
    t_particles: f64,
) -> Result<MarginalDiscrepancy> {
    if particles.dim() != 1 {
        return Err(Error::Config(format!("particle run has d = {}, the grid is one-dimensional", particles.dim())));
    }
    if (t_grid - t_particles).abs() > 1e-9 * t_grid.abs().max(1.0) {
        return Err(Error::Config(format!("grid time {t_grid} differs from particle time {t_particles}")));
    }
    let atoms = grid.to_measure()?;
    Ok(MarginalDiscrepancy {
        w1_x: wasserstein1_1d(&atoms, particles, Coord::Position(0)),
        w1_v: wasserstein1_1d(&atoms, particles, Coord::Velocity(0)),
    })
}
