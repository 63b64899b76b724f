//! The `iar` command line: tokenize, fuzz-invariance, train, sample, eval
//! and synth.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::{run, Cli, Command};
pub use config::RunConfig;

use thiserror::Error;

/// Failure classes, each with its own exit code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}
