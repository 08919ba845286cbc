use std::path::Path;

use thiserror::Error;

/// Every failure the binary reports. The variant picks the exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn data(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Data(format!("{context}: {err}"))
    }

    pub fn write(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Internal(format!("cannot write {}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;
