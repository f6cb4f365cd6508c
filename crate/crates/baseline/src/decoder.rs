use std::time::Instant;

use rayon::prelude::*;
use tanner_core::{DetectorErrorModel, SyndromeBatch};

use crate::bp::{BpConfig, BpDecoder, OsdMode};
use crate::error::DecodeError;
use crate::graph::DecodingGraph;
use crate::osd::osd0;

/// Outcome of decoding one shot.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub estimate: Vec<u8>,
    pub prediction: Vec<u8>,
    pub converged: bool,
    pub iterations: usize,
    pub used_osd: bool,
}

/// BP with optional OSD-0 fallback when BP does not converge.
#[derive(Debug, Clone)]
pub struct BpOsd {
    graph: DecodingGraph,
    bp: BpDecoder,
    config: BpConfig,
}

/// Per-shot results of a batch, in shot order.
#[derive(Debug, Clone)]
pub struct BatchDecode {
    pub num_observables: usize,
    /// `shots x k` predicted observable flips.
    pub predictions: Vec<u8>,
    pub converged: Vec<bool>,
    pub iterations: Vec<usize>,
    /// Wall time per shot in microseconds.
    pub micros: Vec<f64>,
}

impl BatchDecode {
    /// Shots whose prediction differs from the label in any observable.
    pub fn failures(&self, labels: &[u8]) -> usize {
        let k = self.num_observables.max(1);
        self.predictions
            .chunks(k)
            .zip(labels.chunks(k))
            .filter(|(p, l)| p.iter().zip(l.iter()).any(|(a, b)| (a & 1) != (b & 1)))
            .count()
    }
}

impl BpOsd {
    pub fn new(dem: &DetectorErrorModel, config: BpConfig) -> Result<Self, DecodeError> {
        let graph = DecodingGraph::new(dem);
        let bp = BpDecoder::new(&graph, &config)?;
        Ok(Self { graph, bp, config })
    }

    /// Default configuration for this model (see [`BpConfig::for_mechanisms`]).
    pub fn with_defaults(dem: &DetectorErrorModel) -> Result<Self, DecodeError> {
        Self::new(dem, BpConfig::for_mechanisms(dem.mechanisms.len()))
    }

    pub fn graph(&self) -> &DecodingGraph {
        &self.graph
    }

    pub fn config(&self) -> &BpConfig {
        &self.config
    }

    pub fn decode(&self, syndrome: &[u8]) -> Result<Decoded, DecodeError> {
        let out = self.bp.decode(syndrome)?;
        let (estimate, used_osd) = if out.converged || self.config.osd == OsdMode::Off {
            (out.estimate.clone(), false)
        } else {
            (osd0(&self.graph, syndrome, &out)?, true)
        };
        Ok(Decoded {
            prediction: self.graph.predict_observables(&estimate),
            estimate,
            converged: out.converged,
            iterations: out.iterations,
            used_osd,
        })
    }

    /// Decodes every shot of a batch (cycle detectors then readout
    /// detectors), shots in parallel.
    pub fn decode_batch(&self, batch: &SyndromeBatch) -> Result<BatchDecode, DecodeError> {
        let results: Vec<(Decoded, f64)> = (0..batch.shots)
            .into_par_iter()
            .map(|s| {
                let dets = batch.detectors(s);
                let start = Instant::now();
                let d = self.decode(&dets)?;
                Ok((d, start.elapsed().as_secs_f64() * 1e6))
            })
            .collect::<Result<_, DecodeError>>()?;
        let mut out = BatchDecode {
            num_observables: self.graph.num_observables,
            predictions: Vec::with_capacity(batch.shots * self.graph.num_observables),
            converged: Vec::with_capacity(batch.shots),
            iterations: Vec::with_capacity(batch.shots),
            micros: Vec::with_capacity(batch.shots),
        };
        for (d, us) in results {
            out.predictions.extend(d.prediction);
            out.converged.push(d.converged);
            out.iterations.push(d.iterations);
            out.micros.push(us);
        }
        Ok(out)
    }
}
