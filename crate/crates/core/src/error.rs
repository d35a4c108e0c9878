use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid coefficient: {0}")]
    InvalidCoefficient(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {point:?} lies outside the parameter box")]
    OutsideDomain { point: Vec<f64> },

    #[error("stabilization is singular on triangle {triangle}: {reason}")]
    StabilizationSingularity { triangle: usize, reason: String },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("factorization failed for a system of size {size}: {diagnostics}")]
    Factorization { size: usize, diagnostics: String },

    #[error("snapshot solve failed at mu = {mu:?}: {source}")]
    SnapshotFailed {
        mu: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("requested {requested} basis functions but only {achievable} are supported by the spectrum")]
    BasisTruncation { requested: usize, achievable: usize },

    #[error("reduced system is singular (N = {n}): {diagnostics}")]
    SingularReduced { n: usize, diagnostics: String },

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("model format error: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse failure category, used by the command line front end for exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config { .. } | Error::InvalidParameter(_) | Error::OutsideDomain { .. } => {
                ErrorCategory::Config
            }
            Error::Io { .. } | Error::Format(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numeric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Config,
    Numeric,
    Io,
}
