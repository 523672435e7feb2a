use thiserror::Error;

/// Errors raised by the geometry, optimization and I/O layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("observed vector has (numerically) zero norm")]
    ZeroVector,
    #[error("row index {index} out of range for ambient dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("only {observed} observed entries for a rank-{rank} subspace")]
    Underdetermined { observed: usize, rank: usize },
    #[error("restricted basis is numerically rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error("residual is degenerate, no descent direction")]
    DegenerateGradient,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("need at least {needed} usable columns, got {available}")]
    TooFewColumns { needed: usize, available: usize },
    #[error("every column was unusable over a full pass")]
    AllColumnsUnusable,
    #[error("denominator is zero")]
    ZeroDenominator,
    #[error("no inlier columns to score")]
    EmptyInliers,
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
