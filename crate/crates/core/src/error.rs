use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error{}: {message}", .trajectory.map(|id| format!(" in trajectory {id}")).unwrap_or_default())]
    Validation {
        trajectory: Option<u64>,
        message: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("degenerate importance weights: {0}")]
    DegenerateWeights(String),

    #[error("fitted Q evaluation diverged: {0}")]
    Divergence(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(trajectory: Option<u64>, message: impl Into<String>) -> Self {
        Error::Validation {
            trajectory,
            message: message.into(),
        }
    }
}
