use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use tanner_core::{sample_incremental, Basis, NoiseProfile, StabilizerCode};
use tanner_tensor::{Tape, Tensor};

use crate::checkpoint::ModelCheckpoint;
use crate::config::TrainConfig;
use crate::error::NeuralError;
use crate::model::GraphQec;

type R<T> = Result<T, NeuralError>;

/// Adam with decoupled weight decay on matrix-shaped parameters.
pub struct AdamW {
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(model: &GraphQec, beta1: f64, beta2: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = model.params().ids().map(|id| Tensor::zeros(model.params().get(id).shape())).collect();
        Self { beta1, beta2, eps: 1e-8, weight_decay, t: 0, m: zeros.clone(), v: zeros }
    }

    /// Applies one update; `grads[i]` belongs to parameter `i` (`None` = zero).
    pub fn update(&mut self, model: &mut GraphQec, grads: &[Option<Tensor>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let ids: Vec<_> = model.params().ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let decay = model.params().get(id).rank() >= 2 && !model.params().name(id).starts_with("encoder.pe") && model.params().name(id) != "encoder.embed";
            let p = model.params_mut().get_mut(id);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let g = grads[i].as_ref().map(Tensor::data);
            for j in 0..p.numel() {
                let gj = g.map_or(0.0, |g| g[j]);
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let step = (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
                let x = &mut p.data_mut()[j];
                if decay {
                    *x -= lr * self.weight_decay * *x;
                }
                *x -= lr * step;
            }
        }
    }
}

/// Loss and gradients for one batch, gradients indexed like the parameters.
pub fn loss_and_grads(
    model: &GraphQec,
    batch: &tanner_core::SyndromeBatch,
    cycle_weights: Option<&[f64]>,
) -> R<(f64, Vec<Option<Tensor>>)> {
    let tape = Tape::new();
    let p = model.params().bind(&tape);
    let loss = model.loss(&p, batch, cycle_weights)?;
    let mut grads = tape.backward(&loss)?;
    let g = p.vars().iter().map(|v| grads.take(v)).collect();
    Ok((loss.value().item(), g))
}

fn clip(grads: &mut [Option<Tensor>], max_norm: f64) -> f64 {
    let norm = grads
        .iter()
        .flatten()
        .map(|g| g.data().iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        for g in grads.iter_mut().flatten() {
            g.scale_assign(max_norm / norm);
        }
    }
    norm
}

/// Seed of the training batch drawn at `step`.
pub fn batch_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Aborts training once the loss has stayed above ten times the first
/// observed loss for `patience` consecutive steps.
#[derive(Debug, Clone)]
pub struct DivergenceGuard {
    patience: usize,
    initial: Option<f64>,
    above: usize,
}

impl DivergenceGuard {
    pub fn new(patience: usize) -> Self {
        Self { patience, initial: None, above: 0 }
    }

    pub fn observe(&mut self, step: usize, loss: f64) -> R<()> {
        let initial = *self.initial.get_or_insert(loss);
        if loss > 10.0 * initial {
            self.above += 1;
            if self.above >= self.patience {
                return Err(NeuralError::Diverged { step, loss, initial, patience: self.patience });
            }
        } else {
            self.above = 0;
        }
        Ok(())
    }
}

/// Why a training run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Completed,
    TimeBudget,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub steps: usize,
    pub losses: Vec<f64>,
    pub stop: StopReason,
    pub seconds: f64,
}

/// Stateful training loop drawing fresh incremental batches every step.
pub struct Trainer<'a> {
    pub model: GraphQec,
    code: &'a StabilizerCode,
    basis: Basis,
    config: TrainConfig,
    optimizer: AdamW,
    step: usize,
    guard: DivergenceGuard,
    losses: Vec<f64>,
    /// CSV `step,loss,lr,grad_norm` appended after every step.
    pub loss_log: Option<PathBuf>,
    /// Periodic checkpoint destination (see `TrainConfig::checkpoint_every`).
    pub checkpoint_path: Option<PathBuf>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: GraphQec, code: &'a StabilizerCode, basis: Basis, config: TrainConfig) -> R<Self> {
        config.validate()?;
        let optimizer = AdamW::new(&model, config.beta1, config.beta2, config.weight_decay);
        let guard = DivergenceGuard::new(config.divergence_patience);
        Ok(Self {
            model,
            code,
            basis,
            config,
            optimizer,
            step: 0,
            guard,
            losses: Vec::new(),
            loss_log: None,
            checkpoint_path: None,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn losses(&self) -> &[f64] {
        &self.losses
    }

    /// One optimiser step; returns the batch loss before the update.
    pub fn step(&mut self) -> R<f64> {
        let cfg = &self.config;
        let batch = sample_incremental(
            self.code,
            cfg.pretrain_length,
            self.basis,
            NoiseProfile::uniform(cfg.p),
            cfg.batch_size,
            batch_seed(cfg.seed, self.step),
        )?;
        let (loss, mut grads) = loss_and_grads(&self.model, &batch, cfg.cycle_weights.as_deref())?;
        if !loss.is_finite() {
            return Err(NeuralError::Tensor(tanner_tensor::TensorError::NonFinite("loss")));
        }
        let norm = match cfg.grad_clip {
            Some(c) => clip(&mut grads, c),
            None => clip(&mut grads, f64::INFINITY),
        };
        let lr = cfg.lr_at(self.step);
        self.optimizer.update(&mut self.model, &grads, lr);

        self.guard.observe(self.step, loss)?;
        if let Some(path) = &self.loss_log {
            let fresh = self.step == 0;
            let mut f = std::fs::OpenOptions::new().create(true).append(!fresh).write(true).truncate(fresh).open(path)?;
            if fresh {
                writeln!(f, "step,loss,lr,grad_norm")?;
            }
            writeln!(f, "{},{loss},{lr},{norm}", self.step)?;
        }
        self.losses.push(loss);
        self.step += 1;
        if cfg.checkpoint_every > 0 && self.step % cfg.checkpoint_every == 0 {
            self.save_checkpoint()?;
        }
        Ok(loss)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        ModelCheckpoint::capture(&self.model, self.step as u64, self.config.seed)
    }

    fn save_checkpoint(&self) -> R<()> {
        if let Some(path) = &self.checkpoint_path {
            let mut w = BufWriter::new(File::create(path)?);
            self.checkpoint().write(&mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    /// Runs until `pretrain_steps` or the time budget is reached.
    pub fn run(&mut self) -> R<TrainReport> {
        let start = Instant::now();
        let mut stop = StopReason::Completed;
        while self.step < self.config.pretrain_steps {
            if let Some(b) = self.config.time_budget_secs {
                if start.elapsed().as_secs_f64() >= b {
                    stop = StopReason::TimeBudget;
                    break;
                }
            }
            let loss = self.step()?;
            if self.step % 50 == 0 {
                log::info!("step {} loss {loss:.5} lr {:.2e}", self.step, self.config.lr_at(self.step));
            }
        }
        self.save_checkpoint()?;
        Ok(TrainReport {
            steps: self.step,
            losses: self.losses.clone(),
            stop,
            seconds: start.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guard_needs_consecutive_excursions() {
        let mut g = DivergenceGuard::new(3);
        g.observe(0, 1.0).unwrap();
        g.observe(1, 11.0).unwrap();
        g.observe(2, 11.0).unwrap();
        g.observe(3, 5.0).unwrap();
        g.observe(4, 11.0).unwrap();
        g.observe(5, 11.0).unwrap();
        let err = g.observe(6, 12.0).unwrap_err();
        assert!(matches!(err, NeuralError::Diverged { step: 6, patience: 3, .. }));
    }

    #[test]
    fn clipping_scales_to_max_norm() {
        let mut g = vec![Some(Tensor::new(&[2], vec![3.0, 4.0]).unwrap()), None];
        assert_eq!(clip(&mut g, 1.0), 5.0);
        let c = g[0].as_ref().unwrap().data();
        assert!((c[0] - 0.6).abs() < 1e-15 && (c[1] - 0.8).abs() < 1e-15);
    }
}
