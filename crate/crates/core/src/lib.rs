pub mod cli;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod measures;
pub mod pdegrid;
pub mod tolerances;
pub mod verify;

pub use error::{Error, Result};
