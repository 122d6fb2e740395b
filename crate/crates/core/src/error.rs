use thiserror::Error;

use crate::numerics::QuadError;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error("conditioning Gram matrix is numerically singular (condition number {condition:.3e} > bound {bound:.3e})")]
    NearSingularGram { condition: f64, bound: f64 },
    #[error("matrix is not positive semidefinite even with jitter {max_jitter:.3e}")]
    NotPositiveSemidefinite { max_jitter: f64 },
    #[error("matrix is not symmetric at ({row}, {col}): gap {gap:.3e}")]
    NotSymmetric { row: usize, col: usize, gap: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("unsupported closed-form example: {0}")]
    UnsupportedExample(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("empirical functional block is singular")]
    SingularEmpiricalBlock,
}

pub type Result<T> = std::result::Result<T, Error>;
