//! Experiment driver for the toolbox: generate data, train, analyze.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use config::{ExperimentConfig, Method};
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
