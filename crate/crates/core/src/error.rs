use thiserror::Error;

/// Errors raised by the training stack.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent configuration: shape mismatches, illegal method/variant
    /// combinations, missing data sources.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    /// The requested operation does not apply to this backend or variant.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A loss or gradient went non-finite.
    #[error("divergence: {0}")]
    Divergence(String),

    /// Goal labeling selected nothing; the demonstrations must be regenerated.
    #[error("empty goal selection: {0}")]
    EmptyGoalSelection(String),

    /// The teacher did not reach the required success rate within its budget.
    #[error("teacher failed to converge: {0}")]
    TeacherFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}

pub(crate) fn contract<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Contract(msg.into()))
}
