use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate design matrix: all leverage scores are zero")]
    DegenerateDesign,
    #[error("non-Lipschitz non-linearity `{0}` cannot be used with the norm constraint enforced; set constraint_mode = disabled")]
    NonLipschitzConstraint(String),
    #[error("numeric overflow evaluating non-linearity at {0}")]
    Overflow(f64),
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("solver failed to converge: {0}")]
    NoConvergence(String),
    #[error("solution blow-up at parameters ({0}, {1})")]
    BlowUp(f64, f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
