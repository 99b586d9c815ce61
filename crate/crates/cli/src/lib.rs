//! Configuration, runs, trace replay and sample export for the interpolation engine.

pub mod commands;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod trace;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
