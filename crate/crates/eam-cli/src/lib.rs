//! Batch front-end: parse a run configuration, dispatch to the simulation
//! and analysis pipelines, and emit CSV tables plus run metadata.

pub mod config;
pub mod runner;
pub mod verify;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid value for {name}: {reason}")]
    Validation { name: String, reason: String },
    #[error("{failed} verification check(s) failed")]
    VerifyFailed { failed: usize },
    #[error(transparent)]
    Core(#[from] eam_core::EamError),
}

impl CliError {
    /// Process exit code: 1 for validation problems, 2 for verify failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerifyFailed { .. } => 2,
            _ => 1,
        }
    }
}
