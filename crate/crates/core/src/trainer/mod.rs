//! Pretraining of encoders and critic, downstream probes, and the experiment
//! matrix.

pub mod checkpoint;
pub mod gaussian;
pub mod matrix;
pub mod pretrain;
pub mod probe;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoders::{ImageEncoder, ImageEncoderSpec, TextEncoder, TextEncoderSpec};
use crate::error::{Error, Result};
use crate::estimators::BoundKind;
use crate::local_mi::{Encoders, ObjectiveKind};
use crate::numeric::Activation;

pub use checkpoint::Checkpoint;
pub use gaussian::{train_gaussian_critic, GaussianRun, GaussianTrainConfig};
pub use matrix::{run_experiment_matrix, run_experiment_matrix_with, Arm, MatrixOutcome, MatrixSpec};
pub use pretrain::{pretrain, Pretrained};
pub use probe::{predict, train_probe, Classifier, ProbeMode, ProbeOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub objective: ObjectiveKind,
    pub bound: BoundKind,
    pub batch_size: usize,
    pub epochs_pretrain: usize,
    pub epochs_probe: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub ema_correction: bool,
    /// Negatives per positive; unset means `batch_size - 1` for cpc and 1
    /// for mine_dv.
    pub k_negatives: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: ObjectiveKind::Local,
            bound: BoundKind::Cpc,
            batch_size: 64,
            epochs_pretrain: 5,
            epochs_probe: 50,
            learning_rate: 5e-4,
            seed: 0,
            ema_correction: false,
            k_negatives: None,
        }
    }
}

impl TrainConfig {
    pub fn negatives(&self) -> usize {
        self.k_negatives.unwrap_or(match self.bound {
            BoundKind::Cpc => self.batch_size.saturating_sub(1),
            BoundKind::MineDv => 1,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if self.epochs_pretrain == 0 || self.epochs_probe == 0 {
            return Err(Error::InvalidConfig("epoch counts must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!("invalid learning_rate {}", self.learning_rate)));
        }
        if self.negatives() == 0 {
            return Err(Error::InvalidConfig("k_negatives must be at least 1".into()));
        }
        Ok(())
    }
}

/// Architecture of the encoders and critics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub image: ImageEncoderSpec,
    pub text: TextEncoderSpec,
    pub critic_hidden: Vec<usize>,
    pub critic_activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image: ImageEncoderSpec::default(),
            text: TextEncoderSpec::default(),
            critic_hidden: vec![64, 32],
            critic_activation: Activation::Relu,
        }
    }
}

impl ModelConfig {
    pub fn build(&self) -> Result<Encoders> {
        Encoders::new(
            ImageEncoder::new(self.image.clone())?,
            TextEncoder::new(self.text.clone())?,
            &self.critic_hidden,
            self.critic_activation,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub objective: f64,
    pub estimate_nats: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub wall_seconds: f64,
    pub checkpoint: Option<String>,
}

/// Per-step and per-epoch training history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn objectives(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.objective).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.estimate_nats).collect()
    }

    /// `step,epoch,objective,estimate_nats,grad_norm`, one row per step.
    /// Values use Rust's shortest round-trip formatting, so the file is a
    /// deterministic function of the log.
    pub fn write_steps_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "step,epoch,objective,estimate_nats,grad_norm")?;
        for s in &self.steps {
            writeln!(w, "{},{},{},{},{}", s.step, s.epoch, s.objective, s.estimate_nats, s.grad_norm)?;
        }
        Ok(())
    }

    /// `epoch,checkpoint`; wall time is left out so that reruns compare
    /// byte-identical.
    pub fn write_epochs_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,checkpoint")?;
        for e in &self.epochs {
            writeln!(w, "{},{}", e.epoch, e.checkpoint.as_deref().unwrap_or(""))?;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_steps_csv(std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("{stem}_steps.csv")),
        )?))?;
        self.write_epochs_csv(std::io::BufWriter::new(std::fs::File::create(
            dir.join(format!("{stem}_epochs.csv")),
        )?))?;
        Ok(())
    }
}

/// Trailing moving average with the given window (shorter at the start).
pub fn smoothed(values: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for (i, &v) in values.iter().enumerate() {
        sum += v;
        if i >= w {
            sum -= values[i - w];
        }
        out.push(sum / (i + 1).min(w) as f64);
    }
    out
}
