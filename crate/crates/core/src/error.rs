use thiserror::Error;

/// Errors produced by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("normal-equation matrix is rank deficient (pivot {pivot:e} at column {index})")]
    RankDeficient { index: usize, pivot: f64 },
    #[error("equality constraints are infeasible or linearly dependent")]
    InfeasibleConstraints,
    #[error("gradient direction lies in the row space of the constraints")]
    DegenerateConstraint,
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("line search could not bracket a minimizer")]
    BracketFailure,
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("graph has no unlabeled vertices")]
    NoUnlabeledVertices,
    #[error("reference solver did not converge after {steps} Newton steps")]
    NoConvergence { steps: usize },
    #[error("parse error at line {line}, field `{field}`: {message}")]
    Parse {
        line: usize,
        field: String,
        message: String,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
