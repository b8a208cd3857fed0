//! Configuration, artifact layout and subcommands of the `fracobs` binary.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
