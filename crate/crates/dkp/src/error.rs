use thiserror::Error;

pub type Result<T, E = DkpError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DkpError {
    #[error(transparent)]
    Core(#[from] fkplab::Error),

    #[error("invalid coefficient field: {0}")]
    InvalidField(String),

    #[error("coefficient field is not elliptic at cell ({i}, {j}): {reason}")]
    NotElliptic { i: usize, j: usize, reason: String },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("solution residual {residual:e} exceeds {limit:e}")]
    Residual { residual: f64, limit: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
