//! Experiment driver for `hsgp-core`: simulated datasets, HSGP-versus-exact
//! accuracy sweeps, lengthscale recovery, interpolation/extrapolation scores,
//! diagnostics tables and timing. Every command is a library function
//! returning typed rows; [`cli`] wires them to files.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod fitting;

pub use config::{Experiment, ExperimentConfig};
pub use dataset::{Dataset, Split};
pub use error::{HarnessError, Result};
