//! Experiment driver for the `sde-pmcmc` samplers: configuration, synthetic
//! data, tuning, runs, chain archives and reports.

pub mod archive;
pub mod commands;
pub mod config;
pub mod error;

pub use config::{ConfigLayer, ExperimentConfig, Particles, Sampler, TuningOption};
pub use error::{CliError, CliResult};
