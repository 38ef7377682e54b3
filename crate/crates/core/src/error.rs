use thiserror::Error;

/// Errors raised by the laboratory core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A precondition of an operation was violated by the caller.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Adaptive quadrature did not reach the requested tolerance.
    #[error("quadrature did not converge on [{lower}, {upper}]: value {value:e}, error estimate {abs_error:e} after {intervals} intervals")]
    Quadrature {
        lower: f64,
        upper: f64,
        value: f64,
        abs_error: f64,
        intervals: usize,
    },

    /// A numerical routine produced a non-finite or otherwise unusable value.
    #[error("numerical error: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::Domain(msg.into()))
}
