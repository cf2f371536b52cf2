use thiserror::Error;

/// Errors raised by measure construction, simulation and control synthesis.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("malformed input: {0}")]
    Input(String),
    #[error("infeasible partition: slab mass {slab_mass} times {intervals} interior slabs exceeds 1")]
    InfeasiblePartition { slab_mass: f64, intervals: usize },
    #[error("degenerate support on axis {axis}: zero width")]
    DegenerateSupport { axis: String },
    #[error("kernel contract violated by `{kernel}`: xi = {value}")]
    KernelContract { kernel: String, value: f64 },
    #[error("non-finite state encountered at t = {time}")]
    Divergence { time: f64 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("frame error: {0}")]
    Frame(String),
    #[error("degenerate concentration: widened slab {slab} already carries more than c")]
    DegenerateConcentration { slab: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("time {t} outside control window [0, {horizon})")]
    Slot { t: f64, horizon: f64 },
    #[error("sparsity breach at t = {time}: control set mass {mass} > {limit}")]
    ConstraintBreach { time: f64, mass: f64, limit: f64 },
    #[error("CFL condition violated: number {cfl} > {limit}")]
    Cfl { cfl: f64, limit: f64 },
    #[error("negative density {value} in cell ({i}, {j})")]
    NegativeDensity { i: usize, j: usize, value: f64 },
    #[error("grid support reached the boundary margin at t = {time}")]
    BoundaryReached { time: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
