use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("invalid decoder configuration: {0}")]
    Config(String),
    #[error("expected {expected} detector bits, got {found}")]
    SyndromeLength { expected: usize, found: usize },
    #[error("syndrome is not in the column space of the detector error model")]
    InfeasibleSyndrome,
    #[error("instance too large for exhaustive decoding: {mechanisms} mechanisms, {detectors} detectors")]
    TooLarge { mechanisms: usize, detectors: usize },
}
