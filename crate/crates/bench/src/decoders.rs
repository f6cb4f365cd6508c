//! [`ShotDecoder`] adapters for the baseline and neural decoders.

use tanner_baseline::{BpConfig, BpOsd};
use tanner_core::{DetectorErrorModel, SyndromeBatch};
use tanner_neural::{DecodeMode, GraphQec};

use crate::error::Result;
use crate::ler::ShotDecoder;

pub struct BpOsdDecoder {
    pub inner: BpOsd,
}

impl BpOsdDecoder {
    pub fn new(dem: &DetectorErrorModel, config: BpConfig) -> Result<Self> {
        Ok(Self { inner: BpOsd::new(dem, config)? })
    }

    pub fn with_defaults(dem: &DetectorErrorModel) -> Result<Self> {
        Ok(Self { inner: BpOsd::with_defaults(dem)? })
    }
}

impl ShotDecoder for BpOsdDecoder {
    fn name(&self) -> &str {
        "bposd"
    }

    fn predict(&self, batch: &SyndromeBatch) -> Result<Vec<u8>> {
        Ok(self.inner.decode_batch(batch)?.predictions)
    }
}

pub struct NeuralDecoder {
    pub model: GraphQec,
    pub mode: DecodeMode,
    /// Shots per forward pass.
    pub chunk: usize,
}

impl NeuralDecoder {
    pub fn new(model: GraphQec, mode: DecodeMode) -> Self {
        Self { model, mode, chunk: 256 }
    }
}

impl ShotDecoder for NeuralDecoder {
    fn name(&self) -> &str {
        "nn"
    }

    fn predict(&self, batch: &SyndromeBatch) -> Result<Vec<u8>> {
        Ok(self.model.predict_chunked(batch, self.mode, self.chunk)?.bits)
    }
}
