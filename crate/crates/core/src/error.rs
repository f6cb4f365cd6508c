use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate code: {0}")]
    Degenerate(String),
    #[error("x and z halves differ in length ({x} vs {z})")]
    LengthMismatch { x: usize, z: usize },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("internal consistency error: {0}")]
    Internal(String),
    #[error("code failed validation:\n{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: rec[-{offset}] refers to a measurement that does not exist ({available} recorded so far)")]
    MissingMeasurement {
        line: usize,
        offset: usize,
        available: usize,
    },
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("unsupported instruction `{0}`")]
    Unsupported(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
