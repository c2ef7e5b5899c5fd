use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("non-finite entry in input")]
    NonFinite,

    #[error("rank-deficient input: interface {interface} has smallest singular value {value:e}")]
    Degenerate { interface: usize, value: f64 },

    #[error("not on the manifold: {0}")]
    NotOnManifold(String),

    #[error("ill-conditioned point (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("ambient dimension {size} exceeds the limit {limit}")]
    Oversize { size: usize, limit: usize },

    #[error("bases are not aligned: {0}")]
    Unaligned(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("invalid initial state: {0}")]
    InvalidInitialState(String),

    #[error("malformed record: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
