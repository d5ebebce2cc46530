use thiserror::Error;

/// Errors raised by the solvers and game constructors.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VsgError {
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("divergence undefined: {0}")]
    Divergence(String),

    #[error("evaluation mode conflict: {0}")]
    ModeConflict(String),

    #[error("iteration cap of {cap} hit with residual {residual:e}")]
    CapHit { cap: usize, residual: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("game kind error: {0}")]
    Kind(String),

    #[error("degenerate importance weights (Z = {z:e}); clip log-weights or lower the reward temperature")]
    DegenerateWeights { z: f64 },

    #[error("degenerate Fisher matrix: no eigenvalue above the cutoff")]
    DegenerateFisher,

    #[error("horizon mismatch: {0}")]
    Horizon(String),

    #[error("game file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, VsgError>;
