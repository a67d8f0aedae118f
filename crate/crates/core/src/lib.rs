pub mod asymptotics;
pub mod cell_solver;
pub mod cli;
pub mod error;
pub mod geometry;
pub mod harmonic_basis;
pub mod oracle;
pub mod verify;

pub use error::{Error, Result};
