use std::path::PathBuf;

use thiserror::Error;

/// Failure of a command, with its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid configuration or input data.
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(volterra_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numerical(_) | CliError::Output { .. } => 3,
        }
    }

    pub(crate) fn invalid(key: &str, msg: impl std::fmt::Display) -> Self {
        CliError::Validation(format!("{key}: {msg}"))
    }
}

impl From<volterra_core::Error> for CliError {
    fn from(e: volterra_core::Error) -> Self {
        use volterra_core::Error as E;
        match e {
            E::InvalidInput(_)
            | E::UnsupportedParameter(_)
            | E::UnsupportedExample(_)
            | E::DimensionMismatch { .. } => CliError::Validation(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
