use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid label {label} at index {index} for {classes} classes")]
    InvalidLabel {
        index: usize,
        label: usize,
        classes: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("problem too large for dense materialization: {size} > {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("rank deficient: smallest singular value {sv_min:e}, largest {sv_max:e}")]
    RankDeficient { sv_min: f64, sv_max: f64 },

    #[error("iteration did not converge: {0}")]
    NotConverged(String),

    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: u64, reason: String },

    #[error("parse error at line {line}: {reason}")]
    Parse { line: u64, reason: String },

    #[error("inconsistent inputs: {0}")]
    Consistency(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
