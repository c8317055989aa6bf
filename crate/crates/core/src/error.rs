use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("covariance matrix is empty")]
    EmptyMatrix,
    #[error("matrix is not square: row {row} has {found} entries, expected {expected}")]
    NotSquare {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("matrix is not symmetric at ({row}, {col}): {upper} vs {lower}")]
    AsymmetricMatrix {
        row: usize,
        col: usize,
        upper: f64,
        lower: f64,
    },
    #[error("matrix is not positive definite (pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("index {index} out of range for {n} variables")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("spin values must be +1 or -1, found {0}")]
    InvalidSpin(i64),
    #[error("problem too large: {what} {size} exceeds limit {limit}")]
    ProblemTooLarge {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("invalid cardinality k = {k} for {n} sensors")]
    InvalidCardinality { k: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 2 samples to estimate a covariance, got {0}")]
    InsufficientSamples(usize),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
