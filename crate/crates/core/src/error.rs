use alloc::string::String;

/// Errors raised by the cooperative learning core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CoopError {
    #[error("empty input")]
    EmptyInput,
    #[error("insufficient rows: need at least {needed}, got {got}")]
    InsufficientRows { needed: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("degenerate response: every penalized coefficient is zero for all lambda")]
    DegenerateResponse,
    #[error("no signal: coefficient vector is all zero")]
    NoSignal,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("collinear inputs: {0}")]
    Collinear(String),
    #[error("solver diverged after {iterations} outer iterations (objective {objective})")]
    Diverged { iterations: usize, objective: f64 },
}

pub type Result<T> = core::result::Result<T, CoopError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> CoopError {
    CoopError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
