use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),
    #[error("invalid input: {0}")]
    Input(String),
}

pub type Result<T> = std::result::Result<T, MetricsError>;
