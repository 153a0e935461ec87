use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("basis is not closed under the bracket: [{0}, {1}] leaves the span")]
    NotClosed(String, String),

    #[error("spanning vectors are linearly dependent")]
    Dependent,

    #[error("not a subalgebra: {0}")]
    NotSubalgebra(String),

    #[error("decomposition is not reductive: {0}")]
    NonReductive(String),

    #[error("vector does not lie in {0}")]
    NotInSubspace(&'static str),

    #[error("operator is not an invariant metric endomorphism: {0}")]
    InvalidMetric(String),

    #[error("metric is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("could not split a reducible module with rational data: {0}")]
    NoRationalSplit(String),

    #[error("eigenvalue clustering is ambiguous: {0}")]
    AmbiguousSpectrum(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
