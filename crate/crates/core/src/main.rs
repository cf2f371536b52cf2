use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinetic_align::cli::{self, CliError, Scenario, SweepGrid};

/// Sparse control of kinetic cooperative systems toward velocity alignment.
///
/// Exit codes: 0 success, 1 runtime error, 2 sparsity breach, 3 step cap
/// reached or alignment not achieved, 4 invalid scenario, 5 a check failed.
#[derive(Parser)]
#[command(name = "kinalign", version)]
struct Cli {
    /// Root under which the scenario's output directory is created.
    #[arg(long, global = true, env = "KINALIGN_OUT", value_name = "DIR")]
    out_root: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled dynamics with trajectory checkpoints.
    Simulate {
        /// Scenario file.
        scenario: PathBuf,
    },
    /// Run the sparse control strategy and write its report.
    Align {
        /// Scenario file.
        scenario: PathBuf,
    },
    /// Align, then check every constraint and estimate.
    Verify {
        /// Scenario file.
        scenario: PathBuf,
    },
    /// Align over a grid of c, epsilon and particle counts.
    Sweep {
        /// Scenario file.
        scenario: PathBuf,
        /// Sparsity budgets (overrides [sweep].c).
        #[arg(long, value_delimiter = ',')]
        c: Option<Vec<f64>>,
        /// Precisions (overrides [sweep].epsilon).
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
        /// Particle counts (overrides [sweep].particles).
        #[arg(long, value_delimiter = ',')]
        particles: Option<Vec<usize>>,
    },
    /// Compare one fundamental step on particles and on the phase grid.
    GridCompare {
        /// Scenario file.
        scenario: PathBuf,
    },
}

fn load(path: &Path) -> Result<Scenario, CliError> {
    Ok(Scenario::load(path)?)
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let root = cli.out_root.as_deref();
    match cli.command {
        Command::Simulate { scenario } => {
            let s = load(&scenario)?;
            cli::simulate_scenario(&s, &cli::output_dir(&s, root, "simulate"))
        }
        Command::Align { scenario } => {
            let s = load(&scenario)?;
            let dir = cli::output_dir(&s, root, "align");
            let run = cli::align(&s, &dir)?;
            println!(
                "{} steps, horizon {:.6} (bound {:.6}), spread {:.6}, output {}",
                run.report.steps.len(),
                run.report.total_horizon,
                run.report.horizon_bound,
                run.report.final_spread(&run.resolved.align.v_star),
                dir.display()
            );
            Ok(run.exit)
        }
        Command::Verify { scenario } => {
            let s = load(&scenario)?;
            let dir = cli::output_dir(&s, root, "verify");
            let run = cli::verify_scenario(&s, &dir)?;
            for c in &run.checks {
                println!("{:<26} {} worst {:.6e} threshold {:.6e}", c.name, if c.pass { "ok  " } else { "FAIL" }, c.worst, c.threshold);
            }
            Ok(run.exit)
        }
        Command::Sweep { scenario, c, epsilon, particles } => {
            let s = load(&scenario)?;
            let dir = cli::output_dir(&s, root, "sweep");
            let (rows, exit) = cli::sweep(&s, &SweepGrid { c, epsilon, particles }, &dir)?;
            for r in &rows {
                println!(
                    "c {:<5} eps {:<6} N {:<6} {:<10} steps {:<5} slack {:.4} ({:.1} s)",
                    r.c, r.epsilon, r.particles, r.status, r.steps, r.slack, r.wall_s
                );
            }
            Ok(exit)
        }
        Command::GridCompare { scenario } => {
            let s = load(&scenario)?;
            let dir = cli::output_dir(&s, root, "grid-compare");
            let g = cli::grid_compare(&s, &dir)?;
            println!(
                "T {:.6}: W1 x {:.3e}, W1 v {:.3e}, mass drift {:.1e}, min density {:.1e}",
                g.t_len, g.w1_x, g.w1_v, g.mass_drift, g.min_density
            );
            Ok(g.exit)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = run(cli).unwrap_or_else(|e| {
        eprintln!("kinalign: {e}");
        e.exit_code()
    });
    ExitCode::from(code as u8)
}
