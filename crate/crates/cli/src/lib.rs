//! Config-driven experiment runner around the core library: adaptive query
//! games, singling-out games, oracle sessions, replay verification, and the
//! theory-check suites, all emitting deterministic CSV artifact trees.

pub mod config;
pub mod error;
pub mod report;
pub mod runner;
pub mod specs;

pub use config::{ExperimentConfig, Mode};
pub use error::{CliError, CliResult};
pub use runner::{run_experiment, ExperimentReport};
