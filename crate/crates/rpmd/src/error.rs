use std::path::PathBuf;

use thiserror::Error;

/// Exit status of the command-line driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    Validation = 1,
    StepperFailure = 2,
    Internal = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("config line {line}, key `{key}`: {message}")]
    Key { line: usize, key: String, message: String },

    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}, line {line}: {message}")]
    Trace { path: PathBuf, line: usize, message: String },

    #[error(transparent)]
    Core(#[from] rpmd_core::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    pub fn exit_status(&self) -> ExitStatus {
        match self {
            CliError::Syntax { .. } | CliError::Key { .. } | CliError::Invalid { .. } | CliError::Trace { .. } => {
                ExitStatus::Validation
            }
            CliError::Io { .. } => ExitStatus::Internal,
            CliError::Core(e) if e.is_step_failure() => ExitStatus::StepperFailure,
            CliError::Core(_) => ExitStatus::Validation,
        }
    }
}
