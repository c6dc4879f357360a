use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e}, largest {largest:e})")]
    NotPositiveDefinite { eigenvalue: f64, largest: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {eigenvalue:e})")]
    NotPositiveSemidefinite { eigenvalue: f64 },

    #[error("matrix is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("{what} did not converge (residual {residual:e})")]
    NumericalFailure { what: &'static str, residual: f64 },

    #[error("brute-force oracle refused a {k}x{m} input (limit k*m <= {limit})")]
    SizeGuard { k: usize, m: usize, limit: usize },

    #[error("basis is not unitary (deviation {deviation:e})")]
    NonUnitary { deviation: f64 },

    #[error("map is not positive: T(vv*) has eigenvalue {eigenvalue:e}")]
    NotPositiveMap { eigenvalue: f64 },

    #[error("malformed certificate: {0}")]
    MalformedCertificate(String),

    #[error("precondition failed: {marginal} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    Precondition { marginal: &'static str, min_eigenvalue: f64 },

    #[error("invalid tolerance: {0}")]
    InvalidTolerance(String),

    #[error("scaling invariant violated at step {step}: {what} (deviation {deviation:e})")]
    InvariantViolated { step: usize, what: &'static str, deviation: f64 },

    #[error("invalid pattern: {0}")]
    InvalidPattern(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
