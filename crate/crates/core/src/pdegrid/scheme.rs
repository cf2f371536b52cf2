use super::{GridSpec, PhaseGrid};
use crate::dynamics::{InteractionKernel, VelocityControl};
use crate::error::{Error, Result};
use crate::tolerances;

/// Non-local force `Psi[f]` at every velocity face, laid out as
/// `i * (nv + 1) + j` with `j = 0 ..= nv`.
///
/// For kernels depending on relative position only, `Psi(x, v) = A(x) - v B(x)`
/// with `A` and `B` column sums of the first and zeroth velocity moments, so
/// the cost is `O(nx^2 + nx nv)`. Other kernels are summed over all occupied
/// cells.
pub fn interaction_field(grid: &PhaseGrid, kernel: &InteractionKernel) -> Result<Vec<f64>> {
    let s = grid.spec();
    let (nx, nv) = (s.nx, s.nv);
    let vol = s.cell_volume();
    let f = grid.densities();
    let mut out = vec![0.0; nx * (nv + 1)];
    if kernel.is_position_radial() {
        let mut m0 = vec![0.0; nx];
        let mut m1 = vec![0.0; nx];
        for i in 0..nx {
            for j in 0..nv {
                let m = f[i * nv + j] * vol;
                m0[i] += m;
                m1[i] += m * s.v_center(j);
            }
        }
        let dx = s.dx();
        let table: Vec<f64> = (0..nx).map(|d| kernel.xi_radial((d as f64 * dx).powi(2))).collect();
        for i in 0..nx {
            let (mut a, mut b) = (0.0, 0.0);
            for k in 0..nx {
                let xi = table[i.abs_diff(k)];
                a += xi * m1[k];
                b += xi * m0[k];
            }
            for j in 0..=nv {
                out[i * (nv + 1) + j] = a - s.v_face(j) * b;
            }
        }
        return Ok(out);
    }
    let occupied: Vec<(f64, f64, f64)> = f
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > 0.0)
        .map(|(k, &d)| (s.x_center(k / nv), s.v_center(k % nv), d * vol))
        .collect();
    for i in 0..nx {
        let x = s.x_center(i);
        for j in 0..=nv {
            let v = s.v_face(j);
            let mut acc = 0.0;
            for &(y, w, m) in &occupied {
                let dv = w - v;
                acc += kernel.xi(&[y - x], &[dv])? * dv * m;
            }
            out[i * (nv + 1) + j] = acc;
        }
    }
    Ok(out)
}

/// Total velocity drift `Psi[f] + u` at the velocity faces.
fn drift(grid: &PhaseGrid, kernel: &InteractionKernel, control: Option<&dyn VelocityControl>, t: f64) -> Result<Vec<f64>> {
    let mut a = interaction_field(grid, kernel)?;
    if let Some(u) = control {
        let s = grid.spec();
        let faces: Vec<f64> = (0..=s.nv).map(|j| s.v_face(j)).collect();
        let mut xs = vec![0.0; s.nv + 1];
        for i in 0..s.nx {
            xs.fill(s.x_center(i));
            u.add_accel(t, t, 1, &xs, &faces, &mut a[i * (s.nv + 1)..(i + 1) * (s.nv + 1)])?;
        }
    }
    Ok(a)
}

fn max_speed(spec: &GridSpec) -> f64 {
    spec.v_lo.abs().max(spec.v_hi.abs())
}

fn step_inner(
    grid: &PhaseGrid,
    kernel: &InteractionKernel,
    control: Option<&dyn VelocityControl>,
    t: f64,
    dt: f64,
) -> Result<(PhaseGrid, f64)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Config(format!("grid step needs dt > 0, got {dt}")));
    }
    let s = *grid.spec();
    let (nx, nv) = (s.nx, s.nv);
    let (dx, dv) = (s.dx(), s.dv());
    let vmax = (0..nv).map(|j| s.v_center(j).abs()).fold(0.0, f64::max);
    let x_cfl = dt * vmax / dx;
    if x_cfl > tolerances::GRID_CFL {
        return Err(Error::Cfl { cfl: x_cfl, limit: tolerances::GRID_CFL });
    }

    // Transport in x with speed v_j, row by row.
    let mut next = grid.clone();
    let mut lost = 0.0;
    {
        let f = grid.densities();
        let g = next.densities_mut();
        let lam = dt / dx;
        let mut flux = vec![0.0; nx + 1];
        for j in 0..nv {
            let v = s.v_center(j);
            for (i, fl) in flux.iter_mut().enumerate() {
                *fl = if v > 0.0 {
                    if i == 0 { 0.0 } else { v * f[(i - 1) * nv + j] }
                } else if i == nx {
                    0.0
                } else {
                    v * f[i * nv + j]
                };
            }
            lost += (flux[nx] - flux[0]) * dt * dv;
            for i in 0..nx {
                g[i * nv + j] = f[i * nv + j] - lam * (flux[i + 1] - flux[i]);
            }
        }
    }

    // Transport in v with the drift of the intermediate state.
    let a = drift(&next, kernel, control, t)?;
    let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cfl = dt * (vmax / dx + amax / dv);
    if cfl > tolerances::GRID_CFL {
        return Err(Error::Cfl { cfl, limit: tolerances::GRID_CFL });
    }
    let mut out = next.clone();
    {
        let f = next.densities();
        let g = out.densities_mut();
        let lam = dt / dv;
        let mut flux = vec![0.0; nv + 1];
        for i in 0..nx {
            let row = &f[i * nv..(i + 1) * nv];
            let ai = &a[i * (nv + 1)..(i + 1) * (nv + 1)];
            for (j, fl) in flux.iter_mut().enumerate() {
                let aj = ai[j];
                *fl = if aj > 0.0 {
                    if j == 0 { 0.0 } else { aj * row[j - 1] }
                } else if j == nv {
                    0.0
                } else {
                    aj * row[j]
                };
            }
            lost += (flux[nv] - flux[0]) * dt * dx;
            for j in 0..nv {
                g[i * nv + j] = row[j] - lam * (flux[j + 1] - flux[j]);
            }
        }
    }
    if let Some(k) = out.densities().iter().position(|&f| f < 0.0) {
        return Err(Error::NegativeDensity { i: k / nv, j: k % nv, value: out.densities()[k] });
    }
    out.add_outflow(lost);
    Ok((out, cfl))
}

/// One split upwind step of length `dt` from time `t`: transport in `x` by
/// `v`, then in `v` by `Psi[f] + u` evaluated on the intermediate grid. The
/// control is sampled at `t`.
///
/// Fails when `dt (max|v| / dx + max|Psi + u| / dv)` exceeds the CFL limit or
/// a density turns negative. Mass leaving through the boundary is added to
/// [`PhaseGrid::outflow`].
pub fn grid_step(
    grid: &PhaseGrid,
    kernel: &InteractionKernel,
    control: Option<&dyn VelocityControl>,
    t: f64,
    dt: f64,
) -> Result<PhaseGrid> {
    step_inner(grid, kernel, control, t, dt).map(|(g, _)| g)
}

/// Step-size policy for [`grid_advance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridRunConfig {
    /// Target CFL number when choosing `dt`.
    pub cfl: f64,
    pub dt_max: f64,
}

impl Default for GridRunConfig {
    fn default() -> Self {
        Self { cfl: 0.5, dt_max: f64::INFINITY }
    }
}

/// Result of [`grid_advance`] with the diagnostics gathered along the way.
#[derive(Debug, Clone)]
pub struct GridRun {
    pub grid: PhaseGrid,
    pub t: f64,
    pub steps: usize,
    pub max_cfl: f64,
    pub min_density: f64,
    /// Largest `|M(t) - M(t0)|` seen at any step.
    pub mass_drift: f64,
}

/// Advances `grid` from `t0` to `t1`. Steps never straddle a control switch.
/// Aborts when occupied cells reach the boundary margin.
pub fn grid_advance(
    grid: &PhaseGrid,
    kernel: &InteractionKernel,
    control: Option<&dyn VelocityControl>,
    t0: f64,
    t1: f64,
    cfg: &GridRunConfig,
) -> Result<GridRun> {
    if !(cfg.cfl > 0.0 && cfg.cfl <= tolerances::GRID_CFL && cfg.dt_max > 0.0) {
        return Err(Error::Config(format!("bad grid run settings {cfg:?}")));
    }
    if !(t1 >= t0) {
        return Err(Error::Config(format!("grid run ends at {t1} before it starts at {t0}")));
    }
    if grid.near_boundary() {
        return Err(Error::BoundaryReached { time: t0 });
    }
    let mut switches: Vec<f64> = control.map_or_else(Vec::new, |u| u.switch_times());
    switches.retain(|&s| s > t0 && s < t1);
    switches.sort_by(f64::total_cmp);
    let s = *grid.spec();
    let m0 = grid.total_mass();
    let mut run = GridRun { grid: grid.clone(), t: t0, steps: 0, max_cfl: 0.0, min_density: grid.min_density(), mass_drift: 0.0 };
    let mut next_switch = 0;
    while run.t < t1 {
        while next_switch < switches.len() && switches[next_switch] <= run.t {
            next_switch += 1;
        }
        let stop = switches.get(next_switch).copied().unwrap_or(t1);
        let a = drift(&run.grid, kernel, control, run.t)?;
        let amax = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let rate = max_speed(&s) / s.dx() + amax / s.dv();
        let mut dt = (cfg.cfl / rate).min(cfg.dt_max);
        let remaining = stop - run.t;
        let pieces = (remaining / dt).ceil().max(1.0);
        dt = remaining / pieces;
        let (g, cfl) = step_inner(&run.grid, kernel, control, run.t, dt)?;
        run.t = if pieces == 1.0 { stop } else { run.t + dt };
        run.grid = g;
        run.steps += 1;
        run.max_cfl = run.max_cfl.max(cfl);
        run.min_density = run.min_density.min(run.grid.min_density());
        run.mass_drift = run.mass_drift.max((run.grid.total_mass() - m0).abs());
        if run.grid.near_boundary() {
            return Err(Error::BoundaryReached { time: run.t });
        }
    }
    Ok(run)
}
