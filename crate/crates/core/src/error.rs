use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("points {0} and {1} coincide")]
    CoincidentPoints(usize, usize),

    #[error("point {index} is outside the admissible region of the kernel: {reason}")]
    NotAdmissible { index: usize, reason: String },

    #[error("kernel matrix is not positive definite (smallest pivot {min_pivot:e} at row {row})")]
    NotPositiveDefinite { min_pivot: f64, row: usize },

    #[error("infeasible problem: available g-mass {available} is below {required}")]
    Infeasible { available: f64, required: f64 },

    #[error("measure is not feasible: {0}")]
    NotFeasible(String),

    #[error("field has non-finite energy")]
    InfiniteFieldEnergy,

    #[error("solver did not converge at stage {stage}: gap {gap:e}")]
    StageNotConverged { stage: usize, gap: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
