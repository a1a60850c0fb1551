use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration: exit code 2, message carries the field path.
    #[error("invalid config at `{path}`: {reason}")]
    Validation { path: String, reason: String },

    /// Anything that went wrong while running: exit code 1.
    #[error("{0}")]
    Runtime(String),

    #[error(transparent)]
    Core(#[from] ada_ogd_core::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        CliError::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn runtime(reason: impl Into<String>) -> Self {
        CliError::Runtime(reason.into())
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation { .. } => 2,
            _ => 1,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
