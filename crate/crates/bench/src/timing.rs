//! Wall-clock scaling of decoders with the number of cycles.

use std::time::{Duration, Instant};

use tanner_baseline::{BpConfig, BpOsd};
use tanner_core::build_extended_tanner;
use tanner_neural::{DecodeMode, GraphQec};

use crate::error::{BenchError, Result};
use crate::ler::MemoryExperiment;

#[derive(Debug, Clone, PartialEq)]
pub struct TimingRow {
    pub cycles: usize,
    pub repetitions: usize,
    pub mean_ms: f64,
    pub std_ms: f64,
    /// `mean_ms / cycles` in microseconds.
    pub per_cycle_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// Least-squares line `mean_ms = intercept + slope * cycles`.
    pub slope_ms: f64,
    pub intercept_ms: f64,
    pub r_squared: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

/// Times `run(cycles, repetition)` for every cycle count. `run` reports the
/// duration of its own timed region so setup and sampling stay outside it.
/// `warmup` untimed calls precede each cycle count.
pub fn time_benchmark<F>(cycles: &[usize], repetitions: usize, warmup: usize, mut run: F) -> Result<TimingReport>
where
    F: FnMut(usize, usize) -> Result<Duration>,
{
    if repetitions == 0 {
        return Err(BenchError::Invalid("repetitions must be at least 1".into()));
    }
    if cycles.is_empty() || cycles.contains(&0) {
        return Err(BenchError::Invalid("cycle counts must be positive".into()));
    }
    let mut rows = Vec::new();
    for &t in cycles {
        for w in 0..warmup {
            run(t, repetitions + w)?;
        }
        let ms: Vec<f64> = (0..repetitions)
            .map(|r| run(t, r).map(|d| d.as_secs_f64() * 1e3))
            .collect::<Result<_>>()?;
        let (mean_ms, std_ms) = mean_std(&ms);
        rows.push(TimingRow { cycles: t, repetitions, mean_ms, std_ms, per_cycle_us: mean_ms * 1e3 / t as f64 });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.cycles as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_ms).collect();
    let (slope_ms, intercept_ms, r_squared) = linear_fit(&xs, &ys);
    Ok(TimingReport { rows, slope_ms, intercept_ms, r_squared })
}

/// Recurrent (or parallel) inference on one shot at a time; the whole
/// forward pass is timed.
pub fn time_neural(
    model: &GraphQec,
    mode: DecodeMode,
    experiment_at: impl Fn(usize) -> Result<MemoryExperiment>,
    cycles: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<TimingReport> {
    let mut current: Option<MemoryExperiment> = None;
    time_benchmark(cycles, repetitions, 1, |t, r| {
        if current.as_ref().map_or(true, |e| e.cycles != t) {
            current = Some(experiment_at(t)?);
        }
        let exp = current.as_ref().expect("experiment set above");
        let batch = exp.sample(1, seed ^ ((t as u64) << 32) ^ r as u64)?;
        let start = Instant::now();
        model.predict(&batch, mode)?;
        Ok(start.elapsed())
    })
}

/// Single-shot BP-OSD decodes on one thread.
pub fn time_bposd(
    experiment_at: impl Fn(usize) -> Result<MemoryExperiment>,
    config: impl Fn(usize) -> BpConfig,
    cycles: &[usize],
    repetitions: usize,
    seed: u64,
) -> Result<TimingReport> {
    let mut current: Option<(MemoryExperiment, BpOsd)> = None;
    time_benchmark(cycles, repetitions, 1, |t, r| {
        if current.as_ref().map_or(true, |(e, _)| e.cycles != t) {
            let exp = experiment_at(t)?;
            let dem = exp.dem()?;
            let decoder = BpOsd::new(&dem, config(dem.mechanisms.len()))?;
            current = Some((exp, decoder));
        }
        let (exp, decoder) = current.as_ref().expect("decoder set above");
        let batch = exp.sample(1, seed ^ ((t as u64) << 32) ^ r as u64)?;
        let dets = batch.detectors(0);
        let start = Instant::now();
        decoder.decode(&dets)?;
        Ok(start.elapsed())
    })
}

/// Graph used by the neural decoder for a memory experiment.
pub fn graph_for(experiment: &MemoryExperiment) -> Result<tanner_core::ExtendedTannerGraph> {
    Ok(build_extended_tanner(&experiment.code, experiment.basis)?)
}
