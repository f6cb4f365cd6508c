use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("fidelity must be positive, got {0}")]
    UndefinedFidelity(f64),
    #[error("singular design: {0}")]
    Singular(String),
    #[error("fit did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64, best: Box<crate::fit::ThresholdFit> },
    #[error(transparent)]
    Circuit(#[from] tanner_core::CircuitError),
    #[error(transparent)]
    Code(#[from] tanner_core::CodeError),
    #[error(transparent)]
    Decode(#[from] tanner_baseline::DecodeError),
    #[error(transparent)]
    Neural(#[from] tanner_neural::NeuralError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = BenchError> = std::result::Result<T, E>;
