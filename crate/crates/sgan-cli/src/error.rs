use std::process::ExitCode;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

/// Command failures, split by exit code: bad invocations and inconsistent
/// configs are usage errors (2), corrupt or mismatched artifact files are
/// integrity errors (3), everything else is a plain failure (1).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Integrity(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn usage(detail: impl Into<String>) -> Self {
        CliError::Usage(detail.into())
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Usage(_) => ExitCode::from(2),
            CliError::Integrity(_) => ExitCode::from(3),
            CliError::Other(_) => ExitCode::from(1),
        }
    }
}

impl From<sgan::Error> for CliError {
    fn from(e: sgan::Error) -> Self {
        match e {
            sgan::Error::Config(_) => CliError::Usage(e.to_string()),
            sgan::Error::Format { .. } | sgan::Error::Checksum { .. } => {
                CliError::Integrity(e.to_string())
            }
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}
