mod force;
mod integrate;
mod kernel;

pub use force::{mean_field_force, particle_forces};
pub use integrate::{
    integrate_observed, simulate, ConstantControl, IntegratorConfig, Observation, Scheme, Trajectory,
    VelocityControl,
};
pub use kernel::{InteractionKernel, Xi};
