use thiserror::Error;

/// Errors raised by the quantized-MIMO routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible bit budget: {0}")]
    InfeasibleBudget(String),

    #[error(
        "exhaustive search refused: {candidates:.3e} candidate allocations exceeds the limit of {limit:.0e}"
    )]
    TooLarge { candidates: f64, limit: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
