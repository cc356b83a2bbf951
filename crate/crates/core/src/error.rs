use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A value does not fit the integer range it must be represented in.
    #[error("range error: {0}")]
    Range(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("job failed: {0}")]
    JobFailed(String),

    /// Interpolation denominator vanished or produced a non-finite value.
    #[error("numerical breakdown: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
