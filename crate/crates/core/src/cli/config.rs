//! Experiment configuration file.
//!
//! TOML with four optional sections. Every key has a default, unknown keys
//! are rejected, and errors carry `path:line:column`. The canonical form is
//! what [`ExperimentConfig::to_canonical`] prints: top-level keys first, then
//! `[world]`, `[model]` (with `[model.image]`, `[model.text]`), `[train]` and
//! `[gaussian]`, each with every key spelled out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthetic::WorldConfig;
use crate::trainer::matrix::MatrixSpec;
use crate::trainer::{Arm, GaussianTrainConfig, ModelConfig, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub out_dir: PathBuf,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_labeled: usize,
    /// Arm names for `matrix`; empty means all nine.
    pub arms: Vec<String>,
    pub world: WorldConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub gaussian: GaussianTrainConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            seeds: vec![0, 1, 2, 3, 4],
            n_train: 20_000,
            n_test: 2_000,
            n_labeled: 20_000,
            arms: Vec::new(),
            world: WorldConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            gaussian: GaussianTrainConfig::default(),
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Line of the first `key =` assignment, for semantic errors.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let loc = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    format!("{}:{l}:{c}", path.display())
                }
                None => path.display().to_string(),
            };
            Error::InvalidConfig(format!("{loc}: {}", e.message()))
        })?;
        cfg.validate().map_err(|e| {
            let msg = match e {
                Error::InvalidConfig(m) => m,
                other => other.to_string(),
            };
            // Point at the offending key when the message names one.
            let key = msg.split(|c: char| !(c.is_alphanumeric() || c == '_')).find(|w| key_line(text, w).is_some());
            match key.and_then(|k| key_line(text, k)) {
                Some(line) => Error::InvalidConfig(format!("{}:{line}: {msg}", path.display())),
                None => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text, path)
    }

    pub fn to_canonical(&self) -> String {
        toml::to_string(self).expect("config is representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        self.gaussian.validate()?;
        self.model.build()?;
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must list at least one seed".into()));
        }
        if self.n_train < 2 || self.n_test < 2 {
            return Err(Error::InvalidConfig("n_train and n_test must be at least 2".into()));
        }
        if self.n_labeled == 0 || self.n_labeled > self.n_train {
            return Err(Error::InvalidConfig(format!(
                "n_labeled must be between 1 and n_train ({}), got {}",
                self.n_train, self.n_labeled
            )));
        }
        if self.model.image.image_size != self.world.image_size {
            return Err(Error::InvalidConfig(format!(
                "image_size differs between world ({}) and model ({})",
                self.world.image_size, self.model.image.image_size
            )));
        }
        if self.model.text.vocab_size < self.world.vocab_size {
            return Err(Error::InvalidConfig(format!(
                "vocab_size of the model ({}) is below the world's ({})",
                self.model.text.vocab_size, self.world.vocab_size
            )));
        }
        self.parsed_arms()?;
        Ok(())
    }

    pub fn parsed_arms(&self) -> Result<Vec<Arm>> {
        if self.arms.is_empty() {
            return Ok(Arm::all());
        }
        self.arms.iter().map(|a| a.parse()).collect()
    }

    /// Train settings for one seed.
    pub fn train_for(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    pub fn matrix_spec(&self, arms: Vec<Arm>) -> MatrixSpec {
        MatrixSpec {
            world: self.world.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            seeds: self.seeds.clone(),
            n_train: self.n_train,
            n_test: self.n_test,
            n_labeled: self.n_labeled,
            arms,
        }
    }
}
