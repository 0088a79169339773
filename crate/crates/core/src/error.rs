use std::path::PathBuf;

use thiserror::Error;

use crate::solver::Block;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("P·Pᵀ is singular with ridge = 0; use a ridge > 0")]
    SingularSpectralGram,

    #[error("solver diverged in the {block} block at iteration {iteration}")]
    Diverged { block: Block, iteration: usize },

    #[error("initial objective is not finite (infeasible starting point for a box constraint?)")]
    InfeasibleStart,

    #[error("every band has a near-zero reference mean; ERGAS is undefined")]
    ErgasUndefined,

    #[error("bad magic in cube file {path:?}: found {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 8] },

    #[error("truncated cube file {path:?}: expected {expected} payload bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("cube dimensions {c}x{w}x{h} overflow or are zero")]
    DimOverflow { c: u64, w: u64, h: u64 },

    #[error("unsupported cube dtype code {0}")]
    UnsupportedDtype(u32),

    #[error("band import failed: {0}")]
    BandImport(String),

    #[error("band index {index} out of range for a cube with {bands} bands")]
    BandOutOfRange { index: usize, bands: usize },

    #[error("malformed spectral response: {0}")]
    SpectralResponse(String),

    #[error("gradient check failed: max relative error {0:e}")]
    GradCheckFailed(f64),

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn mismatch(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Diverged { .. } | Error::GradCheckFailed(_) | Error::InfeasibleStart
        )
    }
}
