use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad arguments or parameter values.
    Usage,
    /// Missing, malformed or inconsistent input data.
    Data,
    /// A numerical routine failed (rank anomaly, non-convergence).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("non-finite sample at band {band} pixel {pixel}")]
    NonFinite { band: usize, pixel: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pixel {pixel} has only {available} neighbor candidates, {requested} requested")]
    TooFewCandidates {
        pixel: usize,
        available: usize,
        requested: usize,
    },

    #[error("rank anomaly: {near_zero} near-zero eigenvalues beyond the {components} component indicators; spectrum {spectrum:?}")]
    RankAnomaly {
        components: usize,
        near_zero: usize,
        spectrum: Vec<f64>,
    },

    #[error("eigensolver did not converge after {iterations} iterations; residuals {residuals:?}")]
    NotConverged { iterations: usize, residuals: Vec<f64> },

    #[error("factorization failed: {0}")]
    Factorization(String),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) => ErrorKind::Usage,
            Error::RankAnomaly { .. } | Error::NotConverged { .. } | Error::Factorization(_) => ErrorKind::Numerical,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
