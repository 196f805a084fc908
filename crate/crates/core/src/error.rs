use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image too small: {width}x{height}, need at least {min}x{min}")]
    ImageTooSmall { width: usize, height: usize, min: usize },

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("road profile has no horizon: {0}")]
    NoHorizon(String),

    #[error("block at ({u}, {v}) with disparity {d} leaves the image")]
    OutOfBounds { u: usize, v: usize, d: usize },

    #[error("image size mismatch: left {left:?}, right {right:?}")]
    SizeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid scene config: {0}")]
    InvalidConfig(String),

    #[error("missing frame: {0}")]
    MissingFrame(String),

    #[error("stereo pair mismatch: {0}")]
    PairMismatch(String),

    #[error("truth mismatch: {0}")]
    TruthMismatch(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by bad inputs rather than by a broken invariant
    /// inside the pipeline.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Invariant(_))
    }
}
