use cooplearn_core::CoopError;
use thiserror::Error;

/// Process exit status of the command line.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Config = 2,
    Numeric = 3,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Numeric(String),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) | CliError::Io(_) => ExitCode::Config,
            CliError::Numeric(_) => ExitCode::Numeric,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<CoopError> for CliError {
    fn from(e: CoopError) -> Self {
        match e {
            CoopError::Diverged { .. }
            | CoopError::NonFinite(_)
            | CoopError::Collinear(_)
            | CoopError::DegenerateResponse
            | CoopError::NoSignal => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(format!("json: {e}"))
    }
}
