use std::io;
use std::path::PathBuf;

use mvusim_core::{ConfigError, Error as CoreError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: usize, column: usize, message: String },
    #[error("{context}: {}: {source}", source.invariant())]
    Validation { context: String, source: ConfigError },
    #[error("{0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Sim(#[from] CoreError),
    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }

    /// Process exit status: 1 bad input, 2 IO, 3 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Parse { .. } | Self::Validation { .. } | Self::Invalid(_) => 1,
            Self::Io { .. } => 2,
            Self::Sim(e) if e.is_internal() => 3,
            Self::Sim(_) => 1,
            Self::Internal(_) => 3,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
