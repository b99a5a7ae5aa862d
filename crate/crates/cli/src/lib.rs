//! Experiment front end for the `edgebeam` crate: instance generation,
//! training, classical baselines, size sweeps and the invariant suite.

pub mod cli;
pub mod commands;
pub mod error;
pub mod spec;
pub mod sweep;
pub mod verify;

pub use error::{CliError, CliResult};
pub use spec::ExperimentSpec;
