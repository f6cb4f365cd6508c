use thiserror::Error;

use tanner_core::{CircuitError, CodeError};
use tanner_tensor::TensorError;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("input does not match the model: {0}")]
    Mismatch(String),
    #[error("checkpoint graph fingerprint {found} does not match graph {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("code has no logical qubits to read out")]
    NoLogicals,
    #[error("training diverged at step {step}: loss {loss} stayed above 10x the initial {initial} for {patience} steps")]
    Diverged {
        step: usize,
        loss: f64,
        initial: f64,
        patience: usize,
    },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
