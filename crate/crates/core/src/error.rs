use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch")]
    GridMismatch,

    #[error("not a weight: sample {index} is {value}")]
    NotAWeight { index: usize, value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rho exceeds domain at point {index} (condition holds up to r = {radius})")]
    RhoExceedsDomain { index: usize, radius: f64 },

    #[error("rho field rejected: {failed} grid points failed")]
    RhoFieldRejected { failed: usize },

    #[error("operator not positive: smallest eigenvalue {0}")]
    OperatorNotPositive(f64),

    #[error("grid too large for dense factorization: {points} points exceeds cap {cap}")]
    TooLarge { points: usize, cap: usize },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("luxemburg bracket not found below {0}")]
    BracketNotFound(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("I/O error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
