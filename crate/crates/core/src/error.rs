use std::path::PathBuf;

use pillarmatch_autodiff::AutodiffError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("point {index} lies within {epsilon} m of the sensor origin")]
    DegeneratePoint { index: usize, epsilon: f64 },

    #[error("insufficient points: need {needed}, have {available}")]
    InsufficientPoints { needed: usize, available: usize },

    #[error("insufficient correspondences: need at least 3, have {0}")]
    InsufficientCorrespondences(usize),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by non-finite values or numeric breakdown.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_) | Error::Autodiff(AutodiffError::NonFinite { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
