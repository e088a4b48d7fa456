use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EpochRecord, StepRecord, TrainConfig, TrainLog};
use crate::encoders::{FeatureGrid, ImageEncoder, ImageSample};
use crate::error::{Error, Result};
use crate::numeric::{adam_step, adam_step_except, glorot_fill, AdamConfig, AdamState, ParamVector};
use crate::rng::stream;
use crate::synthetic::WorldSample;
use crate::trainer::checkpoint::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    Frozen,
    Finetune,
}

impl ProbeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProbeMode::Frozen => "frozen",
            ProbeMode::Finetune => "finetune",
        }
    }
}

/// Dense head from the global image feature to one logit per task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classifier {
    pub in_dim: usize,
    pub n_tasks: usize,
}

impl Classifier {
    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(&[
            ("head.w".into(), vec![self.n_tasks, self.in_dim]),
            ("head.b".into(), vec![self.n_tasks]),
        ])
        .expect("fixed layout")
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = self.zeros();
        glorot_fill(&mut p.values_mut()[..self.n_tasks * self.in_dim], self.in_dim, self.n_tasks, rng);
        p
    }

    pub fn logits(&self, head: &ParamVector, feature: &[f64]) -> Vec<f64> {
        let v = head.values();
        let (w, b) = v.split_at(self.n_tasks * self.in_dim);
        w.chunks_exact(self.in_dim)
            .zip(b)
            .map(|(row, bias)| bias + row.iter().zip(feature).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }

    /// Mean binary cross-entropy over the batch and tasks. Accumulates the
    /// head gradient into `grad` and returns the loss and, per sample, the
    /// gradient with respect to the feature.
    pub fn bce_step(
        &self,
        head: &ParamVector,
        features: &[Vec<f64>],
        labels: &[Vec<u8>],
        grad: &mut ParamVector,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        if features.len() != labels.len() || labels.iter().any(|l| l.len() != self.n_tasks) {
            return Err(Error::InvalidInput("label and feature counts differ".into()));
        }
        let scale = 1.0 / (features.len() * self.n_tasks) as f64;
        let w = &head.values()[..self.n_tasks * self.in_dim];
        let (gw, gb) = grad.values_mut().split_at_mut(self.n_tasks * self.in_dim);
        let mut loss = 0.0;
        let mut d_feats = Vec::with_capacity(features.len());
        for (f, y) in features.iter().zip(labels) {
            let z = self.logits(head, f);
            let mut d_f = vec![0.0; self.in_dim];
            for (t, (&zt, &yt)) in z.iter().zip(y).enumerate() {
                let yt = f64::from(yt);
                // log(1 + e^z) - y z, evaluated stably
                loss += zt.max(0.0) + (-zt.abs()).exp().ln_1p() - yt * zt;
                let d = (sigmoid(zt) - yt) * scale;
                gb[t] += d;
                let row = &w[t * self.in_dim..(t + 1) * self.in_dim];
                for i in 0..self.in_dim {
                    gw[t * self.in_dim + i] += d * f[i];
                    d_f[i] += d * row[i];
                }
            }
            d_feats.push(d_f);
        }
        Ok((loss * scale, d_feats))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct ProbeOutcome {
    pub image: ParamVector,
    pub head: ParamVector,
    pub classifier: Classifier,
    pub log: TrainLog,
    /// SHA-256 of the frozen segments before and after training.
    pub frozen_hash_before: String,
    pub frozen_hash_after: String,
}

/// Hash of the grid-producing segments of an image encoder's parameters.
pub fn frozen_hash(encoder: &ImageEncoder, params: &ParamVector) -> Result<String> {
    let (frozen, _) = encoder.freeze_split();
    Ok(sha256_hex(&params.segment_bytes(&frozen)?))
}

/// Trains a classifier head on the global feature of `encoder`, starting
/// from `image_params`. In frozen mode the grid-producing segments are never
/// updated; in finetune mode every segment is.
pub fn train_probe(
    encoder: &ImageEncoder,
    image_params: &ParamVector,
    data: &[WorldSample],
    mode: ProbeMode,
    epochs: usize,
    config: &TrainConfig,
) -> Result<ProbeOutcome> {
    if data.is_empty() {
        return Err(Error::InvalidInput("probe needs labelled samples".into()));
    }
    let n_tasks = data[0].labels.len();
    if data.iter().any(|s| s.labels.len() != n_tasks) {
        return Err(Error::InvalidInput("inconsistent label counts".into()));
    }
    let classifier = Classifier {
        in_dim: encoder.global_dim(),
        n_tasks,
    };
    let seed = config.seed;
    let mut head = classifier.init(&mut stream(seed, "probe-init"));
    let mut image = image_params.clone();
    let adam = AdamConfig::with_lr(config.learning_rate);
    let mut head_state = AdamState::for_params(adam, &head);
    let mut image_state = AdamState::for_params(adam, &image);
    let (frozen, _) = encoder.freeze_split();
    let frozen_hash_before = frozen_hash(encoder, &image)?;

    // With the grid stage frozen its output never changes: encode once.
    let grids: Option<Vec<FeatureGrid>> = match mode {
        ProbeMode::Frozen => Some(
            data.iter()
                .map(|s| encoder.encode_local(&image, &s.image))
                .collect::<Result<_>>()?,
        ),
        ProbeMode::Finetune => None,
    };

    let mut rng = stream(seed, "probe-shuffle");
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..epochs {
        let started = std::time::Instant::now();
        order.shuffle(&mut rng);
        for idx in order.chunks(config.batch_size) {
            let mut img_grad = image.zeros_like();
            let mut head_grad = head.zeros_like();
            let mut feats = Vec::with_capacity(idx.len());
            let mut caches = Vec::with_capacity(idx.len());
            for &i in idx {
                let (grid, local_cache) = match &grids {
                    Some(g) => (g[i].clone(), None),
                    None => {
                        let (g, c) = encoder.forward_local(&image, &data[i].image)?;
                        (g, Some(c))
                    }
                };
                let (f, gc) = encoder.forward_global(&image, &grid)?;
                feats.push(f.vector);
                caches.push((local_cache, gc));
            }
            let labels: Vec<Vec<u8>> = idx.iter().map(|&i| data[i].labels.clone()).collect();
            let (loss, d_feats) = classifier.bce_step(&head, &feats, &labels, &mut head_grad)?;
            if !loss.is_finite() {
                return Err(Error::NumericAbort {
                    step: log.steps.len(),
                    last_good: None,
                });
            }
            for ((lc, gc), d) in caches.iter().zip(&d_feats) {
                let d_grid = encoder.backward_global(&image, gc, d, &mut img_grad);
                if let Some(lc) = lc {
                    encoder.backward_local(&image, lc, &d_grid, &mut img_grad);
                }
            }
            let grad_norm = (img_grad.norm().powi(2) + head_grad.norm().powi(2)).sqrt();
            log.steps.push(StepRecord {
                step: log.steps.len(),
                epoch,
                objective: loss,
                estimate_nats: loss,
                grad_norm,
            });
            adam_step(&mut head, head_grad.values(), &mut head_state);
            match mode {
                ProbeMode::Frozen => adam_step_except(&mut image, img_grad.values(), &mut image_state, &frozen),
                ProbeMode::Finetune => adam_step(&mut image, img_grad.values(), &mut image_state),
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            wall_seconds: started.elapsed().as_secs_f64(),
            checkpoint: None,
        });
    }
    let frozen_hash_after = frozen_hash(encoder, &image)?;
    Ok(ProbeOutcome {
        image,
        head,
        classifier,
        log,
        frozen_hash_before,
        frozen_hash_after,
    })
}

/// Per-sample logits, one per task.
pub fn predict(
    encoder: &ImageEncoder,
    image_params: &ParamVector,
    classifier: &Classifier,
    head: &ParamVector,
    images: &[&ImageSample],
) -> Result<Vec<Vec<f64>>> {
    images
        .iter()
        .map(|img| {
            let f = encoder.encode_global(image_params, img)?;
            Ok(classifier.logits(head, &f.vector))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::ImageEncoderSpec;
    use crate::numeric::max_relative_error;
    use crate::synthetic::{sample_world, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn separable_features_reach_full_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Classifier { in_dim: 3, n_tasks: 2 };
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        while feats.len() < 40 {
            let f: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            if f[0].abs() < 0.1 || (f[1] - f[2]).abs() < 0.1 {
                continue;
            }
            labels.push(vec![u8::from(f[0] > 0.0), u8::from(f[1] - f[2] > 0.0)]);
            feats.push(f);
        }
        let mut head = c.init(&mut rng);
        let mut st = AdamState::for_params(AdamConfig::with_lr(0.1), &head);
        for _ in 0..200 {
            let mut g = head.zeros_like();
            c.bce_step(&head, &feats, &labels, &mut g).unwrap();
            adam_step(&mut head, g.values(), &mut st);
        }
        for (f, y) in feats.iter().zip(&labels) {
            let z = c.logits(&head, f);
            for (zt, &yt) in z.iter().zip(y) {
                assert_eq!(u8::from(*zt > 0.0), yt);
            }
        }
    }

    #[test]
    fn bce_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Classifier { in_dim: 4, n_tasks: 3 };
        let head = c.init(&mut rng);
        let feats: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let labels: Vec<Vec<u8>> = (0..5).map(|_| (0..3).map(|_| rng.random_range(0..2u8)).collect()).collect();
        let mut g = head.zeros_like();
        let (_, d_feats) = c.bce_step(&head, &feats, &labels, &mut g).unwrap();
        let loss_at = |h: &ParamVector, f: &[Vec<f64>]| {
            let mut scratch = h.zeros_like();
            c.bce_step(h, f, &labels, &mut scratch).unwrap().0
        };
        let err = max_relative_error(
            |x| {
                let mut h = head.clone();
                h.values_mut().copy_from_slice(x);
                loss_at(&h, &feats)
            },
            g.values(),
            head.values(),
            1e-5,
        );
        assert!(err < 1e-8);
        let err = max_relative_error(
            |x| {
                let mut f = feats.clone();
                f[2] = x.to_vec();
                loss_at(&head, &f)
            },
            &d_feats[2],
            &feats[2],
            1e-5,
        );
        assert!(err < 1e-8);
    }

    fn tiny_setup() -> (ImageEncoder, ParamVector, Vec<WorldSample>) {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let world = sample_world(
            &WorldConfig {
                image_size: 16,
                tile_size: 4,
                ..WorldConfig::default()
            },
            &mut rng,
        )
        .unwrap();
        let data = world.generate_dataset(20, &mut rng);
        let enc = ImageEncoder::new(ImageEncoderSpec {
            image_size: 16,
            local_channels: vec![3, 4, 4],
            global_channels: 4,
            global_dim: 5,
        })
        .unwrap();
        let p = enc.init(&mut rng);
        (enc, p, data)
    }

    #[test]
    fn frozen_mode_keeps_grid_stage() {
        let (enc, p, data) = tiny_setup();
        let cfg = TrainConfig {
            batch_size: 6,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train_probe(&enc, &p, &data, ProbeMode::Frozen, 3, &cfg).unwrap();
        let (frozen, tunable) = enc.freeze_split();
        assert_eq!(out.frozen_hash_before, out.frozen_hash_after);
        assert_eq!(p.segment_bytes(&frozen).unwrap(), out.image.segment_bytes(&frozen).unwrap());
        assert_ne!(p.segment_bytes(&tunable).unwrap(), out.image.segment_bytes(&tunable).unwrap());
    }

    #[test]
    fn finetune_mode_updates_everything() {
        let (enc, p, data) = tiny_setup();
        let cfg = TrainConfig {
            batch_size: 6,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let out = train_probe(&enc, &p, &data, ProbeMode::Finetune, 2, &cfg).unwrap();
        assert_ne!(out.frozen_hash_before, out.frozen_hash_after);
        let scores = predict(
            &enc,
            &out.image,
            &out.classifier,
            &out.head,
            &data.iter().map(|s| &s.image).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(scores.len(), 20);
        assert!(scores.iter().all(|s| s.len() == 4));
    }

    #[test]
    fn frozen_and_finetune_share_forward_path() {
        // With lr 0 neither mode moves, and both produce identical logs.
        let (enc, p, data) = tiny_setup();
        let cfg = TrainConfig {
            batch_size: 7,
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        let a = train_probe(&enc, &p, &data, ProbeMode::Frozen, 1, &cfg).unwrap();
        let b = train_probe(&enc, &p, &data, ProbeMode::Finetune, 1, &cfg).unwrap();
        assert_eq!(a.log.steps.iter().map(|s| s.objective).collect::<Vec<_>>(), b.log.steps.iter().map(|s| s.objective).collect::<Vec<_>>());
        assert_eq!(a.image, p);
    }
}
