use alloc::string::String;

/// Errors produced by the core library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Block or matrix dimensions do not conform.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// An argument is outside the admissible domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A matrix that must be symmetric positive definite failed to factor.
    #[error("{what} is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite {
        what: String,
        pivot: usize,
        value: f64,
    },
    /// An operator handed to a symmetric solver failed the symmetry probe.
    #[error("operator is not symmetric: probe mismatch {0:e}")]
    NotSymmetric(f64),
    /// A dense verification artifact was requested above its size cap.
    #[error("dense size cap exceeded: dimension {dim} > cap {cap}")]
    CapExceeded { dim: usize, cap: usize },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn domain_err(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
