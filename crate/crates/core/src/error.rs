use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension {dim} exceeds the configured maximum of {limit}")]
    DimensionLimit { dim: usize, limit: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid quantum state: {0}")]
    InvalidState(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate cycle: {0}")]
    DegenerateCycle(String),

    #[error("no temperature gradient: beta1 = {beta1} must be smaller than beta2 = {beta2}")]
    NoGradient { beta1: f64, beta2: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}
