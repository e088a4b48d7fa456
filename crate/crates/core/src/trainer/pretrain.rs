use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;

use super::{Checkpoint, EpochRecord, StepRecord, TrainConfig, TrainLog};
use crate::error::{Error, Result};
use crate::estimators::{shuffle_negatives, DvEma};
use crate::local_mi::objective::objective_with;
use crate::local_mi::{Encoders, ModelParams, PairBatch};
use crate::numeric::{adam_step, AdamConfig, AdamState, ParamVector};
use crate::rng::stream;
use crate::synthetic::WorldSample;

#[derive(Debug, Clone)]
pub struct Pretrained {
    pub params: ModelParams,
    pub log: TrainLog,
}

/// Where per-epoch checkpoints go, and the config hash stamped into them.
#[derive(Debug, Clone)]
pub struct CheckpointSink {
    pub dir: PathBuf,
    pub config_hash: String,
}

impl CheckpointSink {
    pub fn path(&self, epoch: usize) -> PathBuf {
        self.dir.join(format!("pretrain-epoch{epoch}.ckpt"))
    }
}

pub fn model_checkpoint(params: &ModelParams, config_hash: &str, seed: u64) -> Checkpoint {
    Checkpoint {
        config_hash: config_hash.to_string(),
        seed,
        groups: vec![
            ("image".into(), params.image.clone()),
            ("text".into(), params.text.clone()),
            ("critic".into(), params.critic.clone()),
        ],
    }
}

pub fn load_model(path: &Path) -> Result<(Checkpoint, ModelParams)> {
    let c = Checkpoint::read(path)?;
    let params = ModelParams {
        image: c.group("image")?.clone(),
        text: c.group("text")?.clone(),
        critic: c.group("critic")?.clone(),
    };
    Ok((c, params))
}

fn descend(params: &mut ParamVector, ascent: &ParamVector, state: &mut AdamState) {
    let g: Vec<f64> = ascent.values().iter().map(|v| -v).collect();
    adam_step(params, &g, state);
}

/// Minibatch boundaries for one epoch: full batches only, unless the whole
/// dataset is smaller than one batch.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    if order.len() <= size {
        return vec![order];
    }
    order.chunks_exact(size).collect()
}

/// Jointly trains image encoder, text encoder and critic by gradient ascent
/// on the configured objective.
pub fn pretrain(
    data: &[WorldSample],
    encoders: &Encoders,
    config: &TrainConfig,
    sink: Option<&CheckpointSink>,
) -> Result<Pretrained> {
    config.validate()?;
    if data.len() < 2 {
        return Err(Error::BatchTooSmall(data.len()));
    }
    let seed = config.seed;
    let mut params = encoders.init(config.objective, &mut stream(seed, "init"));
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut states = [
        AdamState::for_params(adam, &params.image),
        AdamState::for_params(adam, &params.text),
        AdamState::for_params(adam, &params.critic),
    ];
    let mut shuffle_rng = stream(seed, "shuffle");
    let mut neg_rng = stream(seed, "negatives");
    let mut ema = config.ema_correction.then(DvEma::default);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut last_good: Option<PathBuf> = None;
    let k = config.negatives();

    for epoch in 0..config.epochs_pretrain {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        for idx in batches(&order, config.batch_size) {
            let batch = PairBatch::new(
                idx.iter().map(|&i| &data[i].image).collect(),
                idx.iter().map(|&i| &data[i].report).collect(),
            )?;
            let negatives = shuffle_negatives(batch.len(), k, &mut neg_rng)?;
            let step = log.steps.len();
            let out = match objective_with(
                config.objective,
                &batch,
                encoders,
                &params,
                config.bound,
                &negatives,
                ema.as_mut(),
            ) {
                Ok(o) => o,
                Err(Error::NonFiniteObjective | Error::NonFinite { .. }) => {
                    return Err(Error::NumericAbort { step, last_good })
                }
                Err(e) => return Err(e),
            };
            let grad_norm = out.grads.norm();
            if !grad_norm.is_finite() {
                return Err(Error::NumericAbort { step, last_good });
            }
            log.steps.push(StepRecord {
                step,
                epoch,
                objective: out.value,
                estimate_nats: out.estimate.value_nats,
                grad_norm,
            });
            descend(&mut params.image, &out.grads.image, &mut states[0]);
            descend(&mut params.text, &out.grads.text, &mut states[1]);
            descend(&mut params.critic, &out.grads.critic, &mut states[2]);
        }
        let checkpoint = match sink {
            Some(s) => {
                let path = s.path(epoch);
                model_checkpoint(&params, &s.config_hash, seed).write(&path)?;
                last_good = Some(path.clone());
                Some(path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            }
            None => None,
        };
        log.epochs.push(EpochRecord {
            epoch,
            wall_seconds: started.elapsed().as_secs_f64(),
            checkpoint,
        });
    }
    Ok(Pretrained { params, log })
}
