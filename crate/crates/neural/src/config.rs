use serde::{Deserialize, Serialize};

use crate::error::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizePreset {
    Small,
    Medium,
    #[serde(rename = "Medium+")]
    MediumPlus,
    Large,
}

impl SizePreset {
    pub const ALL: [SizePreset; 4] = [
        SizePreset::Small,
        SizePreset::Medium,
        SizePreset::MediumPlus,
        SizePreset::Large,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "small" => Some(Self::Small),
            "medium" | "median" => Some(Self::Medium),
            "medium+" | "median+" | "mediumplus" => Some(Self::MediumPlus),
            "large" => Some(Self::Large),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Small => "Small",
            Self::Medium => "Medium",
            Self::MediumPlus => "Medium+",
            Self::Large => "Large",
        }
    }

    /// Nominal parameter count (embeddings and positional encodings excluded).
    pub fn nominal_params(self) -> usize {
        match self {
            Self::Small => 2_600_000,
            Self::Medium => 8_100_000,
            Self::MediumPlus => 10_100_000,
            Self::Large => 19_800_000,
        }
    }
}

/// Architecture hyperparameters. Field names match the published
/// configuration tables so JSON configs can be copied across.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder_dim: usize,
    pub decoder_dim: usize,
    pub readout_dim: usize,
    pub num_encoder_layers: usize,
    pub num_decoder_layers: usize,
    pub num_readout_layers: usize,
    pub num_heads: usize,
    pub scatter_activation: String,
    pub scatter_fn: String,
    pub ffn_dim_multiplier: f64,
    pub multiple_of: usize,
    pub norm_eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size_preset: Option<SizePreset>,
}

impl ModelConfig {
    pub fn preset(size: SizePreset) -> Self {
        let (e, d, r, le, ld, lr) = match size {
            SizePreset::Small => (96, 128, 128, 2, 3, 6),
            SizePreset::Medium => (128, 192, 128, 4, 3, 16),
            SizePreset::MediumPlus => (128, 192, 128, 4, 6, 16),
            SizePreset::Large => (192, 256, 192, 5, 4, 16),
        };
        Self {
            encoder_dim: e,
            decoder_dim: d,
            readout_dim: r,
            num_encoder_layers: le,
            num_decoder_layers: ld,
            num_readout_layers: lr,
            num_heads: 8,
            scatter_activation: "tanh".into(),
            scatter_fn: "mul".into(),
            ffn_dim_multiplier: 3.0,
            multiple_of: 32,
            norm_eps: 1e-5,
            size_preset: Some(size),
        }
    }

    /// Tiny model for fast tests.
    pub fn tiny() -> Self {
        Self {
            encoder_dim: 16,
            decoder_dim: 16,
            readout_dim: 16,
            num_encoder_layers: 1,
            num_decoder_layers: 2,
            num_readout_layers: 1,
            num_heads: 2,
            size_preset: None,
            ..Self::preset(SizePreset::Small)
        }
    }

    /// SwiGLU hidden width: `ffn_dim_multiplier * dim` rounded up to `multiple_of`.
    pub fn ffn_dim(&self, dim: usize) -> usize {
        let raw = (self.ffn_dim_multiplier * dim as f64).round() as usize;
        let m = self.multiple_of.max(1);
        raw.div_ceil(m) * m
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let h = self.num_heads;
        for (name, dim) in [
            ("encoder_dim", self.encoder_dim),
            ("decoder_dim", self.decoder_dim),
            ("readout_dim", self.readout_dim),
        ] {
            if h == 0 || dim == 0 || dim % h != 0 {
                return Err(NeuralError::Config(format!(
                    "{name}={dim} must be a positive multiple of num_heads={h}"
                )));
            }
        }
        if self.scatter_activation != "tanh" || self.scatter_fn != "mul" {
            return Err(NeuralError::Config(format!(
                "only scatter_activation=tanh and scatter_fn=mul are supported, got {}/{}",
                self.scatter_activation, self.scatter_fn
            )));
        }
        if !(self.norm_eps > 0.0) || !(self.ffn_dim_multiplier > 0.0) {
            return Err(NeuralError::Config("norm_eps and ffn_dim_multiplier must be positive".into()));
        }
        Ok(())
    }
}

/// One row of the published per-code training table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPreset {
    pub family: &'static str,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    pub model: SizePreset,
    pub pretrain_steps: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_length: usize,
}

pub const TRAINING_PRESETS: [TrainingPreset; 9] = [
    TrainingPreset { family: "bb", n: 72, k: 12, d: 6, model: SizePreset::Large, pretrain_steps: 5_000_000, learning_rate: 1e-4, batch_size: 512, pretrain_length: 24 },
    TrainingPreset { family: "bb", n: 144, k: 12, d: 12, model: SizePreset::Large, pretrain_steps: 10_000_000, learning_rate: 3e-4, batch_size: 256, pretrain_length: 24 },
    TrainingPreset { family: "color", n: 7, k: 1, d: 3, model: SizePreset::Small, pretrain_steps: 800_000, learning_rate: 3e-4, batch_size: 1024, pretrain_length: 18 },
    TrainingPreset { family: "color", n: 19, k: 1, d: 5, model: SizePreset::Medium, pretrain_steps: 2_000_000, learning_rate: 3e-4, batch_size: 1024, pretrain_length: 24 },
    TrainingPreset { family: "color", n: 37, k: 1, d: 7, model: SizePreset::Medium, pretrain_steps: 3_000_000, learning_rate: 3e-4, batch_size: 1024, pretrain_length: 24 },
    TrainingPreset { family: "color", n: 61, k: 1, d: 9, model: SizePreset::Large, pretrain_steps: 8_000_000, learning_rate: 1e-4, batch_size: 512, pretrain_length: 24 },
    TrainingPreset { family: "color", n: 91, k: 1, d: 11, model: SizePreset::Large, pretrain_steps: 10_000_000, learning_rate: 1e-4, batch_size: 512, pretrain_length: 24 },
    TrainingPreset { family: "surface", n: 9, k: 1, d: 3, model: SizePreset::MediumPlus, pretrain_steps: 600_000, learning_rate: 5e-4, batch_size: 2048, pretrain_length: 25 },
    TrainingPreset { family: "surface", n: 25, k: 1, d: 5, model: SizePreset::MediumPlus, pretrain_steps: 1_600_000, learning_rate: 5e-4, batch_size: 2048, pretrain_length: 25 },
];

pub fn training_preset(family: &str, n: usize) -> Option<TrainingPreset> {
    TRAINING_PRESETS
        .iter()
        .find(|p| p.family.eq_ignore_ascii_case(family) && p.n == n)
        .copied()
}

/// Optimisation settings. `learning_rate`, `batch_size`, `pretrain_length`
/// and `pretrain_steps` keep the published key names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Cycles per training sequence.
    pub pretrain_length: usize,
    pub pretrain_steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    /// Defaults to `min(1000, pretrain_steps / 10)`.
    #[serde(default)]
    pub warmup_steps: Option<usize>,
    /// Global gradient-norm clip; `None` disables clipping.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    /// Per-cycle loss weights (uniform when absent).
    #[serde(default)]
    pub cycle_weights: Option<Vec<f64>>,
    /// Physical error rate for uniform circuit noise.
    pub p: f64,
    pub seed: u64,
    /// Stop early once this much wall time has elapsed.
    #[serde(default)]
    pub time_budget_secs: Option<f64>,
    /// Write a checkpoint every this many steps (0 = only at the end).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Consecutive steps above 10x the initial loss before aborting.
    pub divergence_patience: usize,
}

impl TrainConfig {
    pub fn from_preset(preset: &TrainingPreset, p: f64, seed: u64) -> Self {
        Self {
            learning_rate: preset.learning_rate,
            batch_size: preset.batch_size,
            pretrain_length: preset.pretrain_length,
            pretrain_steps: preset.pretrain_steps,
            beta1: 0.9,
            beta2: 0.95,
            weight_decay: 0.01,
            warmup_steps: None,
            grad_clip: Some(1.0),
            cycle_weights: None,
            p,
            seed,
            time_budget_secs: None,
            checkpoint_every: 0,
            divergence_patience: 1000,
        }
    }

    pub fn warmup(&self) -> usize {
        self.warmup_steps
            .unwrap_or_else(|| 1000.min(self.pretrain_steps / 10))
    }

    /// Linear warmup then cosine decay to zero.
    pub fn lr_at(&self, step: usize) -> f64 {
        let warm = self.warmup();
        if step < warm {
            return self.learning_rate * (step + 1) as f64 / warm as f64;
        }
        let rest = self.pretrain_steps.saturating_sub(warm).max(1);
        let frac = ((step - warm) as f64 / rest as f64).min(1.0);
        0.5 * self.learning_rate * (1.0 + (std::f64::consts::PI * frac).cos())
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.batch_size == 0 || self.pretrain_length == 0 || self.pretrain_steps == 0 {
            return bad("batch_size, pretrain_length and pretrain_steps must be positive");
        }
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("learning_rate must be positive and betas in [0, 1)");
        }
        if !(0.0..=0.5).contains(&self.p) {
            return bad("p must lie in [0, 0.5]");
        }
        if let Some(w) = &self.cycle_weights {
            if w.len() != self.pretrain_length || w.iter().any(|x| !(*x >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
                return bad("cycle_weights needs pretrain_length non-negative entries with a positive sum");
            }
        }
        Ok(())
    }
}
