use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GsrcError {
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },

    #[error("{path}: unsupported bit depth ({detail})")]
    UnsupportedBitDepth { path: PathBuf, detail: String },

    #[error("{path}: corrupt header: {reason}")]
    CorruptHeader { path: PathBuf, reason: String },

    #[error("{path}: unsupported format: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("image {width}x{height} is smaller than the {side}x{side} {what}")]
    TooSmall {
        width: usize,
        height: usize,
        side: usize,
        what: &'static str,
    },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("pixel ({row}, {col}) is covered by no patch")]
    UncoveredPixel { row: usize, col: usize },

    #[error("patch at ({row}, {col}) with side {side} is out of bounds")]
    OutOfBounds { row: usize, col: usize, side: usize },

    #[error("empty sample")]
    EmptySample,
}

pub type Result<T> = std::result::Result<T, GsrcError>;

impl GsrcError {
    pub(crate) fn io(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        GsrcError::Io {
            path: path.into(),
            reason: err.to_string(),
        }
    }
}
