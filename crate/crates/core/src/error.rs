use thiserror::Error;

/// Crate-wide error type. Numerical failures carry enough context to tell a
/// degenerate input from an implementation fault.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: pivot {pivot:.6e} at column {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("gradient target must be a 1x1 node, got {rows}x{cols}")]
    NonScalarOutput { rows: usize, cols: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("noise mean requires alpha > 1, got {alpha}")]
    AlphaTooSmall { alpha: f64 },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no source datasets provided")]
    EmptySourceData,
    #[error("unknown head index {index}, model has {count}")]
    UnknownHead { index: usize, count: usize },
    #[error("quadratic program did not converge within {iterations} iterations")]
    QpNoConvergence { iterations: usize },
    #[error("population needs at least 4 members, got {np}")]
    PopulationTooSmall { np: usize },
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("negative input to a transform that requires y >= 0: {0}")]
    NegativeInput(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
