use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported Matern smoothness {0}; expected 0.5, 1.5 or 2.5")]
    UnsupportedSmoothness(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite kernel value {value} at pair ({row}, {col})")]
    NonFiniteKernel { row: usize, col: usize, value: f64 },

    #[error("matrix is not positive definite ({0}); increase the nugget")]
    NotPositiveDefinite(String),

    #[error("non-positive Ritz value {0:e}; matrix is indefinite or numerically singular, increase the nugget")]
    IndefiniteRitz(f64),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("dense path limited to N <= {limit}, got {n}")]
    TooLargeForDense { n: usize, limit: usize },

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteKernel { .. }
                | Error::NotPositiveDefinite(_)
                | Error::IndefiniteRitz(_)
                | Error::NoConvergence { .. }
        )
    }
}
