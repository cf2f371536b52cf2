//! Numerical tolerances shared by the library, the verifiers and the
//! acceptance suite. Every threshold used to decide pass/fail lives here.

/// Probability-measure normalisation slack on the total weight.
pub const WEIGHT_SUM: f64 = 1e-12;

/// Slack when comparing accumulated slab masses against a discrete target.
pub const MASS_COMPARE: f64 = 1e-12;

/// Velocities this far below the canonical frame floor are still accepted.
pub const FRAME_FLOOR: f64 = 1e-12;

/// Allowance on measured vs predicted velocity-support height per step
/// (rk4, dt <= 1e-3).
pub const STEP_CONTRACTION: f64 = 1e-4;

/// Allowance on measured position-support growth per step.
pub const STEP_POSITION_GROWTH: f64 = 1e-4;

/// Allowance on the partial-sum bound of the step durations.
pub const PARTIAL_SUM: f64 = 1e-9;

/// Allowance on finite-difference slopes of the control against its
/// declared Lipschitz constant.
pub const CONTROL_LIPSCHITZ: f64 = 1e-9;

/// Velocity-box growth permitted under uncontrolled dynamics.
pub const SUPPORT_INVARIANCE: f64 = 1e-4;

/// Round-trip deviation permitted for translation / boost equivariance.
pub const EQUIVARIANCE: f64 = 1e-9;

/// Allowance on the sampled velocity divergence against `L * d`.
pub const DIVERGENCE: f64 = 1e-3;

/// Finite-difference step for divergence sampling.
pub const DIVERGENCE_STEP: f64 = 1e-5;

/// Relative slack applied to histogram density growth.
pub const DENSITY_HISTOGRAM_SLACK: f64 = 0.5;

/// Mass conservation on the phase grid while support is interior.
pub const GRID_MASS: f64 = 1e-12;

/// Maximum CFL number accepted by the grid solver.
pub const GRID_CFL: f64 = 0.9;

/// Density below which a grid cell counts as empty.
pub const GRID_SUPPORT_FLOOR: f64 = 1e-12;

/// Minimum distance, in cells, between grid support and the boundary.
pub const GRID_BOUNDARY_CELLS: usize = 2;

/// Particle-grid marginal discrepancy after one fundamental step.
pub const GRID_PARTICLE_W1: f64 = 0.02;

/// Agreement between the quantile and linear-programming routes to W1.
pub const W1_ORACLE: f64 = 1e-9;

/// Frame map round trip.
pub const FRAME_ROUND_TRIP: f64 = 1e-14;

/// Hard cap on the number of fundamental steps in a single run.
pub const MAX_STEPS_CAP: usize = 100_000;

/// Sparsity allowance: the discrete surrogate permits `c + SPARSITY_ATOMS / N`.
pub const SPARSITY_ATOMS: f64 = 2.0;
