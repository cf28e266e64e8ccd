//! Batch front-end: run configuration, artifact persistence and the
//! forge / verify / eval / probe / audit-primes commands.

pub mod artifacts;
pub mod commands;
pub mod config;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("validation: {0}")]
    Validation(String),
    #[error("corrupt artifacts: {0}")]
    Corrupt(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Corrupt(_) | CliError::Runtime(_) => 1,
        }
    }
}

pub(crate) fn io_err(what: &str, path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("{what} {}: {e}", path.display()))
}
