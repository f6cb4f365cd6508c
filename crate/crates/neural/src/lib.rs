//! Graph neural decoder for repeated stabilizer measurements.
//!
//! [`GraphQec`] encodes each syndrome cycle on the code's Tanner graph,
//! carries per-qubit features through time with gated delta-rule layers, and
//! reads logical flips off the logical representatives. [`Trainer`] fits it on
//! freshly sampled incremental batches; [`ModelCheckpoint`] saves and reloads
//! it.

pub mod checkpoint;
pub mod config;
mod error;
mod layers;
pub mod mask;
mod model;
mod params;
pub mod train;

pub use checkpoint::ModelCheckpoint;
pub use config::{ModelConfig, SizePreset, TrainConfig, TrainingPreset};
pub use error::NeuralError;
pub use model::{DecodeMode, DecoderState, GraphQec, GraphShape, Predictions};
pub use params::{Bound, Init, ParamId, ParamStore};
pub use train::{DivergenceGuard, StopReason, TrainReport, Trainer};
