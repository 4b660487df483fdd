use std::path::PathBuf;

/// Errors produced by the phasecp library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image dimensions {width}x{height} are not divisible by 2^{levels}")]
    Dimension {
        width: usize,
        height: usize,
        levels: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("solver diverged at iteration {iteration} (non-finite iterate)")]
    Divergence { iteration: usize },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
