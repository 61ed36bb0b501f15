use thiserror::Error;

/// Errors raised by the approximation, the exact oracle and the diagnostics.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HsgpError {
    /// Malformed arguments: wrong dimensions, non-positive scales, non-finite data.
    #[error("invalid input: {0}")]
    Input(String),
    /// The requested operation is not defined for this kernel family.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A configured size cap would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    /// An argument lies outside the range where the evaluation is reliable.
    #[error("argument out of range: {0}")]
    Range(String),
    /// A factorization or solve failed.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, HsgpError>;

pub(crate) fn input_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(HsgpError::Input(msg.into()))
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        input_err(format!("{name} must be a finite positive number, got {value}"))
    }
}
