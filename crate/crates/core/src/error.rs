use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("index overflow: {0}")]
    IndexOverflow(String),

    #[error("matrix is not positive definite (non-positive pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("incomplete factorization broke down at row {row} (pivot {pivot:e})")]
    IncompleteBreakdown { row: usize, pivot: f64 },

    #[error("zero diagonal in triangular factor at row {0}")]
    ZeroDiagonal(usize),

    #[error("selected inversion requires a complete factor")]
    IncompleteFactor,

    #[error("operator is not positive definite (p'Qp = {0:e})")]
    Indefinite(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid partition plan: {0}")]
    InvalidPlan(String),

    #[error("interface too large: |S| = {size} exceeds dense limit {limit}")]
    InterfaceTooLarge { size: usize, limit: usize },

    #[error("oracle size limit exceeded: n = {size} > {limit}")]
    OracleLimit { size: usize, limit: usize },

    #[error("recursion depth exceeded {0}")]
    RecursionDepth(usize),

    #[error("solver did not converge: {0}")]
    NotConverged(String),

    #[error("selected inverse does not cover entry ({row}, {col}) (and {more} more)")]
    PatternNotCovered { row: usize, col: usize, more: usize },

    #[error("unknown {kind} '{name}'")]
    Unknown { kind: &'static str, name: String },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("missing block '{block}' ({path})")]
    MissingBlock { block: String, path: PathBuf },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
