use thiserror::Error;

/// Errors raised by models, data handling and estimators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("numerical error: {message}")]
    Numerical { message: String, residual: Option<f64> },

    #[error("capacity exceeded: {what} requires {required} entries (limit {limit})")]
    Capacity {
        what: String,
        required: usize,
        limit: usize,
    },

    #[error("overlap violation: evaluation policy puts mass {pi_e} on action {action} where the behavior policy has none")]
    OverlapViolation { action: String, pi_e: f64 },

    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("insufficient support: no data with observation {obs} and action {action}")]
    InsufficientSupport { obs: usize, action: usize },

    #[error("degenerate estimate: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn numerical(message: impl Into<String>) -> Self {
        Error::Numerical {
            message: message.into(),
            residual: None,
        }
    }

    pub(crate) fn argument(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
