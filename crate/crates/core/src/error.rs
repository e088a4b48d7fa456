use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch at layer {layer}: expected {expected}, got {got}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },

    #[error("objective evaluated to a non-finite value")]
    NonFiniteObjective,

    #[error("parameter layout error: {0}")]
    Layout(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("token id {token} is outside the vocabulary (size {vocab})")]
    UnknownToken { token: usize, vocab: usize },

    #[error("batch of size {0} is too small; at least 2 pairs are needed for negatives")]
    BatchTooSmall(usize),

    #[error("AUC undefined: labels contain a single class")]
    SingleClass,

    #[error("{0}")]
    InvalidInput(String),

    #[error("probability table is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("state space of {0} joint states is too large for exhaustive enumeration")]
    StateSpaceTooLarge(usize),

    #[error("non-finite objective at step {step}; last good checkpoint: {}", last_good.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "none".into()))]
    NumericAbort {
        step: usize,
        last_good: Option<PathBuf>,
    },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
