//! Logical error rate estimation with a failure-count stopping rule.

use tanner_core::{
    build_memory_circuit, extract_dem, sample_pauli_frame, Basis, DetectorErrorModel, NoiseProfile, NoisyCircuit,
    StabilizerCode, SyndromeBatch,
};

use crate::error::{BenchError, Result};
use crate::metrics::per_cycle_from_ler;

/// Sample until `min_failures` shot failures are seen or `max_shots` shots
/// have been decoded, in batches of `batch_shots`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoppingRule {
    pub min_failures: usize,
    pub max_shots: usize,
    pub batch_shots: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        Self { min_failures: 100, max_shots: 10_000_000, batch_shots: 1000 }
    }
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        if self.min_failures == 0 || self.max_shots == 0 || self.batch_shots == 0 {
            return Err(BenchError::Invalid("stopping rule needs positive min_failures, max_shots and batch_shots".into()));
        }
        Ok(())
    }
}

/// Shot-level estimate: a shot fails when any logical qubit is mispredicted.
#[derive(Debug, Clone, PartialEq)]
pub struct LerEstimate {
    pub failures: usize,
    pub shots: usize,
    pub p_hat: f64,
    /// `sqrt(p_hat (1 - p_hat) / shots)`
    pub sigma: f64,
    pub cycles: usize,
    /// Per-cycle rate from `p_hat`; `None` when `p_hat >= 0.5`.
    pub per_cycle_pc: Option<f64>,
    /// First-order propagation of `sigma` to `per_cycle_pc`.
    pub pc_sigma: Option<f64>,
    /// Failures of each logical qubit on its own.
    pub per_logical_failures: Vec<usize>,
    /// The shot budget ran out before `min_failures` failures were seen.
    pub low_confidence: bool,
}

impl LerEstimate {
    pub fn from_counts(failures: usize, shots: usize, cycles: usize, per_logical_failures: Vec<usize>, min_failures: usize) -> Self {
        let p_hat = if shots == 0 { 0.0 } else { failures as f64 / shots as f64 };
        let sigma = if shots == 0 { 0.0 } else { (p_hat * (1.0 - p_hat) / shots as f64).sqrt() };
        let t = cycles.max(1) as f64;
        let per_cycle_pc = per_cycle_from_ler(p_hat, t);
        let pc_sigma = per_cycle_pc.map(|_| (1.0 - 2.0 * p_hat).powf(1.0 / t - 1.0) / t * sigma);
        Self {
            failures,
            shots,
            p_hat,
            sigma,
            cycles,
            per_cycle_pc,
            pc_sigma,
            per_logical_failures,
            low_confidence: failures < min_failures,
        }
    }

    pub fn per_logical_rates(&self) -> Vec<f64> {
        self.per_logical_failures
            .iter()
            .map(|&f| if self.shots == 0 { 0.0 } else { f as f64 / self.shots as f64 })
            .collect()
    }

    /// `sigma / p_hat`, roughly `1 / sqrt(failures)` for small rates.
    pub fn relative_error(&self) -> f64 {
        if self.p_hat > 0.0 {
            self.sigma / self.p_hat
        } else {
            f64::INFINITY
        }
    }
}

/// Seed of the `index`-th batch drawn from `seed`.
pub fn batch_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Runs the stopping rule over a source of per-shot mispredictions.
///
/// `draw(shots, seed)` must return `shots x k` flags, 1 where a logical qubit
/// was mispredicted.
pub fn run_stopping_rule<F>(k: usize, cycles: usize, rule: &StoppingRule, seed: u64, mut draw: F) -> Result<LerEstimate>
where
    F: FnMut(usize, u64) -> Result<Vec<u8>>,
{
    rule.validate()?;
    if k == 0 {
        return Err(BenchError::Invalid("no logical qubits to score".into()));
    }
    let (mut shots, mut failures) = (0usize, 0usize);
    let mut per_logical = vec![0usize; k];
    let mut index = 0;
    while failures < rule.min_failures && shots < rule.max_shots {
        let n = rule.batch_shots.min(rule.max_shots - shots);
        let wrong = draw(n, batch_seed(seed, index))?;
        if wrong.len() != n * k {
            return Err(BenchError::Invalid(format!("expected {} flags, got {}", n * k, wrong.len())));
        }
        for shot in wrong.chunks(k) {
            let mut any = false;
            for (count, &w) in per_logical.iter_mut().zip(shot) {
                if w != 0 {
                    *count += 1;
                    any = true;
                }
            }
            failures += usize::from(any);
        }
        shots += n;
        index += 1;
    }
    Ok(LerEstimate::from_counts(failures, shots, cycles, per_logical, rule.min_failures))
}

/// Anything that maps a syndrome batch to `shots x k` predicted observable
/// flips.
pub trait ShotDecoder {
    fn name(&self) -> &str;
    fn predict(&self, batch: &SyndromeBatch) -> Result<Vec<u8>>;
}

/// A memory experiment under uniform circuit noise.
#[derive(Debug, Clone)]
pub struct MemoryExperiment {
    pub code: StabilizerCode,
    pub basis: Basis,
    pub p: f64,
    pub cycles: usize,
    circuit: NoisyCircuit,
}

impl MemoryExperiment {
    pub fn new(code: StabilizerCode, cycles: usize, basis: Basis, p: f64) -> Result<Self> {
        let circuit = build_memory_circuit(&code, cycles, basis, NoiseProfile::uniform(p))?;
        Ok(Self { code, basis, p, cycles, circuit })
    }

    pub fn circuit(&self) -> &NoisyCircuit {
        &self.circuit
    }

    pub fn dem(&self) -> Result<DetectorErrorModel> {
        Ok(extract_dem(&self.circuit)?)
    }

    pub fn sample(&self, shots: usize, seed: u64) -> Result<SyndromeBatch> {
        Ok(sample_pauli_frame(&self.circuit, shots, seed)?)
    }
}

/// Positions where predictions and labels disagree.
pub fn mispredictions(predictions: &[u8], labels: &[u8]) -> Result<Vec<u8>> {
    if predictions.len() != labels.len() {
        return Err(BenchError::Invalid(format!("{} predictions for {} labels", predictions.len(), labels.len())));
    }
    Ok(predictions.iter().zip(labels).map(|(&a, &b)| (a ^ b) & 1).collect())
}

pub fn estimate_ler(decoder: &dyn ShotDecoder, experiment: &MemoryExperiment, rule: &StoppingRule, seed: u64) -> Result<LerEstimate> {
    run_stopping_rule(experiment.code.k, experiment.cycles, rule, seed, |shots, s| {
        let batch = experiment.sample(shots, s)?;
        mispredictions(&decoder.predict(&batch)?, &batch.labels)
    })
}
