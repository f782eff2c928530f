use thiserror::Error;

/// Errors produced by the estimators, weight builders and diagnostics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("column {0} of the design has zero norm")]
    DegenerateColumn(usize),

    #[error("restricted design is rank deficient (smallest singular value {sigma_min:e}, largest {sigma_max:e})")]
    SingularDesign { sigma_min: f64, sigma_max: f64 },

    #[error("regime violation: {0}")]
    RegimeViolation(String),

    #[error("size guard exceeded: {0}")]
    GuardExceeded(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
