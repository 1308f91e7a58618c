//! Batch front end for percond: run configs, commands and output files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod validate;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
