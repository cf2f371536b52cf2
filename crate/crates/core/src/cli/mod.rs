//! Scenario-driven runs and their on-disk artifacts.

pub mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use scenario::{Resolved, Scenario, ScenarioError, SCHEMA};

use crate::control::{
    build_step_plan, reduce_frame, run_alignment, run_fundamental_step, AlignmentConfig, AlignmentReport, Outcome, Pass,
};
use crate::dynamics::simulate;
use crate::error::Error;
use crate::measures::{fmt_real, write_csv_with_time, EmpiricalMeasure};
use crate::pdegrid::{grid_advance, grid_vs_particle, GridRunConfig, GridSpec, PhaseGrid};
use crate::tolerances;
use crate::verify::{self, CheckOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_BREACH: i32 = 2;
pub const EXIT_NOT_TERMINATED: i32 = 3;
pub const EXIT_SCENARIO: i32 = 4;
pub const EXIT_CHECKS_FAILED: i32 = 5;

#[derive(Debug)]
pub enum CliError {
    Scenario(ScenarioError),
    Run(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scenario(_) => EXIT_SCENARIO,
            CliError::Run(Error::ConstraintBreach { .. }) => EXIT_BREACH,
            CliError::Run(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Scenario(e) => e.fmt(f),
            CliError::Run(e) => e.fmt(f),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Run(Error::Io(e))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Run(Error::Csv(e))
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Output directory of `command`: `<root>/<output.dir>/<command>`, where the
/// root defaults to the current directory.
pub fn output_dir(s: &Scenario, root: Option<&Path>, command: &str) -> PathBuf {
    root.map_or_else(PathBuf::new, Path::to_path_buf).join(&s.output.dir).join(command)
}

/// Identifies the inputs of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: String,
    pub command: String,
    pub scenario_sha256: String,
    pub version: String,
    pub dimension: usize,
    pub particles: usize,
    pub seed: Option<u64>,
    pub kernel: String,
    pub lipschitz: f64,
    pub c: f64,
    pub epsilon: f64,
    pub v_star: Vec<f64>,
    pub scheme: String,
    pub dt: f64,
}

impl Manifest {
    pub fn new(s: &Scenario, r: &Resolved, command: &str) -> Self {
        let digest = Sha256::digest(s.source().as_bytes());
        Self {
            schema: SCHEMA.into(),
            command: command.into(),
            scenario_sha256: digest.iter().fold(String::new(), |mut h, b| {
                let _ = write!(h, "{b:02x}");
                h
            }),
            version: env!("CARGO_PKG_VERSION").into(),
            dimension: r.initial.dim(),
            particles: r.initial.len(),
            seed: s.measure.seed,
            kernel: r.kernel.name().into(),
            lipschitz: r.align.lipschitz,
            c: r.align.c,
            epsilon: r.align.epsilon,
            v_star: r.align.v_star.clone(),
            scheme: r.align.integrator.scheme.name().into(),
            dt: r.align.integrator.dt_max,
        }
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        let text = toml::to_string(self).map_err(|e| Error::Input(e.to_string()))?;
        fs::write(dir.join("manifest.toml"), text)?;
        Ok(())
    }
}

/// Fails unless two runs come from the same scenario inputs.
pub fn ensure_same_scenario(a: &Manifest, b: &Manifest) -> crate::Result<()> {
    let strip = |m: &Manifest| Manifest { command: String::new(), particles: 0, ..m.clone() };
    if strip(a) != strip(b) {
        return Err(Error::Config(format!(
            "runs differ in scenario: {} vs {}",
            a.scenario_sha256, b.scenario_sha256
        )));
    }
    Ok(())
}

fn write_state(path: &Path, mu: &EmpiricalMeasure, t: f64) -> CliResult<()> {
    write_csv_with_time(mu, t, BufWriter::new(fs::File::create(path)?))?;
    Ok(())
}

fn write_checks(path: &Path, checks: &[CheckOutcome]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["check", "pass", "worst", "threshold", "witness"])?;
    for c in checks {
        w.write_record([c.name.clone(), c.pass.to_string(), fmt_real(c.worst), fmt_real(c.threshold), c.witness.clone()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_report(dir: &Path, report: &AlignmentReport) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("report.csv"))?;
    w.write_record([
        "k", "axis", "pass", "t_start", "t_len", "n", "delta", "eta", "alpha", "v_height", "x_width", "v_pred",
        "v_meas", "x_meas", "omega_mass_max", "u_sup", "density_sup_start", "idle_box_growth",
    ])?;
    for s in &report.steps {
        let p = &s.plan;
        let mut row = vec![s.k.to_string(), p.axis.to_string(), s.pass.name().to_string()];
        row.extend([s.t_start, p.t_len].map(fmt_real));
        row.push(p.n.to_string());
        row.extend(
            [
                p.delta,
                p.eta,
                p.alpha,
                p.v_height,
                p.x_width,
                s.v_pred,
                s.v_meas,
                s.x_meas,
                s.omega_mass_max,
                s.u_sup,
                s.density_sup_start,
                s.idle_box_growth,
            ]
            .map(fmt_real),
        );
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trace.csv"))?;
    w.write_record(["t", "v_height", "omega_mass", "u_sup", "density_sup"])?;
    let tr = &report.trace;
    for i in 0..tr.len() {
        w.write_record([tr.times[i], tr.v_height[i], tr.omega_mass[i], tr.u_sup[i], tr.density_sup[i]].map(fmt_real))?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("frames.csv"))?;
    w.write_record(["axis", "pass", "precision", "v0", "steps", "horizon", "alpha", "horizon_bound", "max_steps"])?;
    for f in &report.frames {
        w.write_record([
            f.axis.to_string(),
            f.pass.name().into(),
            fmt_real(f.precision),
            fmt_real(f.v0),
            f.steps.to_string(),
            fmt_real(f.horizon),
            f.alpha.map_or_else(String::new, fmt_real),
            fmt_real(f.horizon_bound),
            f.max_steps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn outcome_name(o: &Outcome) -> &'static str {
    match o {
        Outcome::Aligned => "aligned",
        Outcome::StepCapReached { .. } => "step-cap",
        Outcome::ConstraintBreach { .. } => "breach",
    }
}

fn exit_for(report: &AlignmentReport) -> i32 {
    match report.outcome {
        Outcome::ConstraintBreach { .. } => EXIT_BREACH,
        _ if !report.terminated => EXIT_NOT_TERMINATED,
        _ => EXIT_OK,
    }
}

/// Checks that follow from the alignment report alone.
pub fn run_checks(report: &AlignmentReport, cfg: &AlignmentConfig, particles: usize) -> Vec<CheckOutcome> {
    let mut out = vec![verify::check_sparsity(&report.trace, cfg.c, particles)];
    out.extend(verify::check_steps(report, 10_000, 1));
    out.push(verify::check_partial_sums(report));
    out.push(verify::check_horizon_bound(report));
    out.push(verify::check_idle_axes(report));
    out.push(verify::check_alignment(report, &cfg.v_star, cfg.epsilon));
    out
}

/// Result of [`align`].
pub struct AlignRun {
    pub resolved: Resolved,
    pub report: AlignmentReport,
    pub checks: Vec<CheckOutcome>,
    pub exit: i32,
}

fn align_resolved(s: &Scenario, mut r: Resolved, dir: &Path, command: &str) -> CliResult<AlignRun> {
    fs::create_dir_all(dir.join("trajectory"))?;
    r.align.record_snapshots = s.output.snapshot_every > 0;
    let report = run_alignment(&r.initial, &r.kernel, &r.align)?;
    write_report(dir, &report)?;
    write_state(&dir.join("trajectory").join("initial.csv"), &r.initial, 0.0)?;
    if s.output.snapshot_every > 0 {
        for (k, (t, mu)) in report.snapshots.iter().enumerate().skip(1) {
            if k % s.output.snapshot_every == 0 {
                write_state(&dir.join("trajectory").join(format!("step_{k:05}.csv")), mu, *t)?;
            }
        }
    }
    write_state(&dir.join("trajectory").join("final.csv"), &report.final_state, report.total_horizon)?;
    let checks = run_checks(&report, &r.align, r.initial.len());
    write_checks(&dir.join("verify.csv"), &checks)?;
    Manifest::new(s, &r, command).write(dir)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "outcome: {}", outcome_name(&report.outcome));
    let _ = writeln!(summary, "terminated: {}", report.terminated);
    let _ = writeln!(summary, "steps: {}", report.steps.len());
    let _ = writeln!(summary, "horizon: {}", fmt_real(report.total_horizon));
    let _ = writeln!(summary, "horizon_bound: {}", fmt_real(report.horizon_bound));
    let slack = if report.horizon_bound > 0.0 { report.total_horizon / report.horizon_bound } else { 0.0 };
    let _ = writeln!(summary, "slack_ratio: {}", fmt_real(slack));
    let _ = writeln!(summary, "final_spread: {}", fmt_real(report.final_spread(&r.align.v_star)));
    let _ = writeln!(summary, "checks_failed: {}", checks.iter().filter(|c| !c.pass).count());
    for w in &report.warnings {
        let _ = writeln!(summary, "warning: {w}");
    }
    fs::write(dir.join("summary.txt"), summary)?;
    let exit = exit_for(&report);
    Ok(AlignRun { resolved: r, report, checks, exit })
}

/// `align`: runs the control strategy and writes report.csv, trace.csv,
/// frames.csv, verify.csv, trajectory/, summary.txt and manifest.toml.
pub fn align(s: &Scenario, dir: &Path) -> CliResult<AlignRun> {
    let r = s.resolve()?;
    align_resolved(s, r, dir, "align")
}

/// `verify`: `align` plus the scenario-level property checks, all written
/// to verify.csv.
pub fn verify_scenario(s: &Scenario, dir: &Path) -> CliResult<AlignRun> {
    let mut run = align_resolved(s, s.resolve()?, dir, "verify")?;
    let r = &run.resolved;
    let horizon = s.simulate.horizon;
    let cfg = &r.align.integrator;
    let d = r.initial.dim();
    run.checks.push(verify::check_support_invariance(&r.initial, &r.kernel, horizon, cfg)?);
    let y: Vec<f64> = vec![1.0; d];
    let zero = vec![0.0; d];
    let mut shift = verify::check_equivariance(&r.initial, &r.kernel, &y, &zero, horizon, cfg)?;
    shift.name = "equivariance_translation".into();
    let mut boost = verify::check_equivariance(&r.initial, &r.kernel, &zero, &y, horizon, cfg)?;
    boost.name = "equivariance_boost".into();
    run.checks.push(shift);
    run.checks.push(boost);
    let mut div = verify::check_divergence_bound(&r.initial, &r.kernel, 100, 3)?;
    for (k, (_, mu)) in run.report.snapshots.iter().enumerate() {
        let o = verify::check_divergence_bound(mu, &r.kernel, 100, 3 + k as u64)?;
        if o.worst > div.worst {
            div = o;
        }
    }
    let last = verify::check_divergence_bound(&run.report.final_state, &r.kernel, 100, 2)?;
    if last.worst > div.worst {
        div = last;
    }
    run.checks.push(div);
    write_checks(&dir.join("verify.csv"), &run.checks)?;
    if run.exit == EXIT_OK && run.checks.iter().any(|c| !c.pass) {
        run.exit = EXIT_CHECKS_FAILED;
    }
    Ok(run)
}

/// `simulate`: the uncontrolled dynamics over `[simulate].horizon`, with
/// equally spaced checkpoints in trajectory/.
pub fn simulate_scenario(s: &Scenario, dir: &Path) -> CliResult<i32> {
    let r = s.resolve()?;
    fs::create_dir_all(dir.join("trajectory"))?;
    let h = s.simulate.horizon;
    let m = s.simulate.checkpoints;
    let marks: Vec<f64> = (1..m).map(|k| h * k as f64 / m as f64).collect();
    let traj = simulate(&r.initial, &r.kernel, None, 0.0, h, &r.align.integrator, &marks)?;
    for (k, (t, mu)) in traj.times.iter().zip(&traj.states).enumerate() {
        write_state(&dir.join("trajectory").join(format!("t_{k:04}.csv")), mu, *t)?;
    }
    let b0 = r.initial.support_box();
    let b1 = traj.last().support_box();
    let mut summary = String::new();
    let _ = writeln!(summary, "horizon: {}", fmt_real(h));
    let _ = writeln!(summary, "checkpoints: {}", traj.times.len());
    let _ = writeln!(summary, "velocity_box_start: {:?} {:?}", b0.v_lo, b0.v_hi);
    let _ = writeln!(summary, "velocity_box_end: {:?} {:?}", b1.v_lo, b1.v_hi);
    fs::write(dir.join("summary.txt"), summary)?;
    Manifest::new(s, &r, "simulate").write(dir)?;
    Ok(EXIT_OK)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub c: f64,
    pub epsilon: f64,
    pub particles: usize,
    pub status: String,
    pub steps: usize,
    pub horizon: f64,
    pub bound: f64,
    pub slack: f64,
    pub wall_s: f64,
    pub exit: i32,
}

/// Parameter grid of a sweep; `None` keeps the scenario's value.
#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub c: Option<Vec<f64>>,
    pub epsilon: Option<Vec<f64>>,
    pub particles: Option<Vec<usize>>,
}

/// `sweep`: one `align` per grid cell in `cell-XX/`, and sweep.csv with one
/// row per cell. Failing cells are recorded and the sweep continues.
pub fn sweep(s: &Scenario, grid: &SweepGrid, dir: &Path) -> CliResult<(Vec<SweepRow>, i32)> {
    fs::create_dir_all(dir)?;
    let cs = grid.c.clone().or_else(|| s.sweep.c.clone()).unwrap_or_else(|| vec![s.control.c]);
    let es = grid.epsilon.clone().or_else(|| s.sweep.epsilon.clone()).unwrap_or_else(|| vec![s.control.epsilon]);
    let ns = grid
        .particles
        .clone()
        .or_else(|| s.sweep.particles.clone())
        .unwrap_or_else(|| vec![s.particles().unwrap_or(0)]);
    let mut rows = Vec::new();
    for &n in &ns {
        for &c in &cs {
            for &e in &es {
                let cell = dir.join(format!("cell-{:02}", rows.len()));
                let start = Instant::now();
                let n_opt = (n > 0).then_some(n);
                let res = s.resolve_with(Some(c), Some(e), n_opt).map_err(CliError::from).and_then(|r| {
                    let n_eff = r.initial.len();
                    align_resolved(s, r, &cell, "sweep").map(|run| (run, n_eff))
                });
                let wall_s = start.elapsed().as_secs_f64();
                let row = match res {
                    Ok((run, n_eff)) => {
                        let rep = &run.report;
                        let slack = if rep.horizon_bound > 0.0 { rep.total_horizon / rep.horizon_bound } else { 0.0 };
                        SweepRow {
                            c,
                            epsilon: e,
                            particles: n_eff,
                            status: outcome_name(&rep.outcome).into(),
                            steps: rep.steps.len(),
                            horizon: rep.total_horizon,
                            bound: rep.horizon_bound,
                            slack,
                            wall_s,
                            exit: run.exit,
                        }
                    }
                    Err(err) => SweepRow {
                        c,
                        epsilon: e,
                        particles: n,
                        status: format!("error: {err}"),
                        steps: 0,
                        horizon: f64::NAN,
                        bound: f64::NAN,
                        slack: f64::NAN,
                        wall_s,
                        exit: err.exit_code(),
                    },
                };
                rows.push(row);
            }
        }
    }
    let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
    w.write_record(["c", "epsilon", "particles", "status", "steps", "horizon", "bound", "slack_ratio", "wall_s"])?;
    for r in &rows {
        w.write_record([
            fmt_real(r.c),
            fmt_real(r.epsilon),
            r.particles.to_string(),
            r.status.clone(),
            r.steps.to_string(),
            fmt_real(r.horizon),
            fmt_real(r.bound),
            fmt_real(r.slack),
            format!("{:.3}", r.wall_s),
        ])?;
    }
    w.flush()?;
    let exit = rows.iter().map(|r| r.exit).find(|&e| e != EXIT_OK).unwrap_or(EXIT_OK);
    Ok((rows, exit))
}

/// Outcome of [`grid_compare`].
#[derive(Debug, Clone)]
pub struct GridComparison {
    pub t_len: f64,
    pub w1_x: f64,
    pub w1_v: f64,
    pub mass_drift: f64,
    pub min_density: f64,
    pub grid_steps: usize,
    pub particles: usize,
    pub exit: i32,
}

/// `grid-compare`: one fundamental step of the boost pass on axis 0, run on
/// particles and on the phase grid from the same initial data, compared by
/// marginal W1.
pub fn grid_compare(s: &Scenario, dir: &Path) -> CliResult<GridComparison> {
    let g = s.grid.clone().ok_or_else(|| ScenarioError {
        origin: s.origin.clone(),
        line: None,
        message: "grid-compare needs a [grid] section".into(),
    })?;
    let r = s.resolve_with(None, None, g.particles)?;
    fs::create_dir_all(dir)?;
    let red = reduce_frame(&r.initial, &r.align.v_star, r.align.epsilon, 0, Pass::Boost, 0.0)?;
    let kernel = red.map.frame_kernel(&r.kernel);
    let pass_cfg = AlignmentConfig { epsilon: red.precision, ..r.align.clone() };
    let plan = build_step_plan(&red.measure, &pass_cfg, 0)?
        .ok_or_else(|| Error::Config("velocities already within precision; nothing to compare".into()))?;
    let particles = run_fundamental_step(&red.measure, &kernel, &plan, &r.align.integrator, 0.0)?;

    let spec = GridSpec::for_step(&red.measure.support_box(), &plan, g.nx, g.nv)?;
    let g0 = match (s.measure.sampler.as_str(), s.sampler()?) {
        ("uniform", Some(crate::measures::sampling::Sampler::Uniform { bounds })) => {
            // Exact density of the sampler, carried into the frame.
            let (mut lo_x, mut lo_v) = (vec![bounds.x_lo[0]], vec![bounds.v_lo[0]]);
            let (mut hi_x, mut hi_v) = (vec![bounds.x_hi[0]], vec![bounds.v_hi[0]]);
            red.map.forward_point(0.0, &mut lo_x, &mut lo_v);
            red.map.forward_point(0.0, &mut hi_x, &mut hi_v);
            let xs = (lo_x[0].min(hi_x[0]), lo_x[0].max(hi_x[0]));
            let vs = (lo_v[0].min(hi_v[0]), lo_v[0].max(hi_v[0]));
            PhaseGrid::from_uniform_box(spec, xs, vs)?
        }
        _ => PhaseGrid::deposit(spec, &red.measure)?,
    };
    let control = crate::control::ControlField { plan: &plan, t0: 0.0 };
    let run = grid_advance(&g0, &kernel, Some(&control), 0.0, plan.t_len, &GridRunConfig { cfl: g.cfl, dt_max: f64::INFINITY })?;
    let d = grid_vs_particle(&run.grid, run.t, &particles.state, plan.t_len)?;

    g0.write_csv(BufWriter::new(fs::File::create(dir.join("grid_initial.csv"))?))?;
    run.grid.write_csv(BufWriter::new(fs::File::create(dir.join("grid_final.csv"))?))?;
    write_state(&dir.join("particles_final.csv"), &particles.state, plan.t_len)?;
    let checks = vec![
        CheckOutcome {
            name: "grid_w1_x".into(),
            pass: d.w1_x <= tolerances::GRID_PARTICLE_W1,
            worst: d.w1_x,
            threshold: tolerances::GRID_PARTICLE_W1,
            witness: format!("t = {}", plan.t_len),
        },
        CheckOutcome {
            name: "grid_w1_v".into(),
            pass: d.w1_v <= tolerances::GRID_PARTICLE_W1,
            worst: d.w1_v,
            threshold: tolerances::GRID_PARTICLE_W1,
            witness: format!("t = {}", plan.t_len),
        },
        CheckOutcome {
            name: "grid_mass".into(),
            pass: run.mass_drift <= tolerances::GRID_MASS,
            worst: run.mass_drift,
            threshold: tolerances::GRID_MASS,
            witness: format!("{} steps", run.steps),
        },
        CheckOutcome {
            name: "grid_positivity".into(),
            pass: run.min_density >= 0.0,
            worst: -run.min_density,
            threshold: 0.0,
            witness: "minimum density".into(),
        },
    ];
    write_checks(&dir.join("compare.csv"), &checks)?;
    Manifest::new(s, &r, "grid-compare").write(dir)?;
    let exit = if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_CHECKS_FAILED };
    Ok(GridComparison {
        t_len: plan.t_len,
        w1_x: d.w1_x,
        w1_v: d.w1_v,
        mass_drift: run.mass_drift,
        min_density: run.min_density,
        grid_steps: run.steps,
        particles: r.initial.len(),
        exit,
    })
}
