use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::probe::{predict, train_probe, ProbeMode};
use super::{pretrain, ModelConfig, TrainConfig, TrainLog};
use crate::downstream_eval::{auc, ResultsTable};
use crate::error::{Error, Result};
use crate::estimators::BoundKind;
use crate::local_mi::{Encoders, ObjectiveKind};
use crate::numeric::ParamVector;
use crate::rng::stream;
use crate::synthetic::{sample_world, WorldConfig, WorldSample};

/// One cell of the experiment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arm {
    /// Random initialization, fine-tuned on labels only.
    ImageOnly,
    Pretrained {
        objective: ObjectiveKind,
        bound: BoundKind,
        mode: ProbeMode,
    },
}

impl Arm {
    /// The baseline followed by the eight pretrained arms.
    pub fn all() -> Vec<Arm> {
        let mut out = vec![Arm::ImageOnly];
        for objective in [ObjectiveKind::Global, ObjectiveKind::Local] {
            for bound in [BoundKind::MineDv, BoundKind::Cpc] {
                for mode in [ProbeMode::Frozen, ProbeMode::Finetune] {
                    out.push(Arm::Pretrained { objective, bound, mode });
                }
            }
        }
        out
    }

    pub fn name(&self) -> String {
        match self {
            Arm::ImageOnly => "image-only".into(),
            Arm::Pretrained { objective, bound, mode } => format!(
                "{}-mi-{}-{}",
                objective.as_str(),
                bound.short(),
                match mode {
                    ProbeMode::Frozen => "frozen",
                    ProbeMode::Finetune => "tuned",
                }
            ),
        }
    }

    pub fn bound_label(&self) -> &'static str {
        match self {
            Arm::ImageOnly => "none",
            Arm::Pretrained { bound, .. } => bound.as_str(),
        }
    }

    pub fn mode(&self) -> ProbeMode {
        match self {
            Arm::ImageOnly => ProbeMode::Finetune,
            Arm::Pretrained { mode, .. } => *mode,
        }
    }

    fn variant(&self) -> Option<(ObjectiveKind, BoundKind)> {
        match self {
            Arm::ImageOnly => None,
            Arm::Pretrained { objective, bound, .. } => Some((*objective, *bound)),
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::all()
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown arm `{s}`")))
    }
}

/// Name of a pretraining variant, e.g. `local-mi-cpc`.
pub fn variant_name(objective: ObjectiveKind, bound: BoundKind) -> String {
    format!("{}-mi-{}", objective.as_str(), bound.short())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSpec {
    pub world: WorldConfig,
    pub model: ModelConfig,
    /// Objective and bound are overridden per arm; the seed per run.
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub n_train: usize,
    pub n_test: usize,
    /// Probe training uses the first `n_labeled` training samples.
    pub n_labeled: usize,
    pub arms: Vec<Arm>,
}

impl MatrixSpec {
    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.train.validate()?;
        if self.seeds.is_empty() || self.arms.is_empty() {
            return Err(Error::InvalidConfig("matrix needs at least one seed and one arm".into()));
        }
        if self.n_labeled == 0 || self.n_labeled > self.n_train {
            return Err(Error::InvalidConfig(format!(
                "n_labeled must be in 1..={}, got {}",
                self.n_train, self.n_labeled
            )));
        }
        if self.n_test < 2 {
            return Err(Error::InvalidConfig("n_test must be at least 2".into()));
        }
        Ok(())
    }

    pub fn task_names(&self) -> Vec<String> {
        let mut t: Vec<String> = (0..self.world.n_regions).map(|n| format!("region{n}")).collect();
        t.push("mean".into());
        t
    }
}

/// Train and test splits for one seed. Every arm of a seed sees the same
/// world and the same samples.
pub struct SeedData {
    pub train: Vec<WorldSample>,
    pub test: Vec<WorldSample>,
}

pub fn seed_data(spec: &MatrixSpec, seed: u64) -> Result<SeedData> {
    let world = sample_world(&spec.world, &mut stream(seed, "world"))?;
    Ok(SeedData {
        train: world.generate_dataset(spec.n_train, &mut stream(seed, "data")),
        test: world.generate_dataset(spec.n_test, &mut stream(seed, "test")),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    /// One AUC per region, then their mean.
    pub aucs: Vec<f64>,
    pub probe_log: TrainLog,
    /// Frozen arms: whether the frozen segments came back byte-identical.
    pub frozen_intact: Option<bool>,
    pub frozen_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmFailure {
    pub arm: Arm,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainRun {
    pub variant: String,
    pub seed: u64,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixOutcome {
    pub runs: Vec<ArmRun>,
    pub pretrain_runs: Vec<PretrainRun>,
    pub failures: Vec<ArmFailure>,
    pub table: ResultsTable,
}

impl MatrixOutcome {
    pub fn mean_auc(&self, arm: Arm, task: &str) -> Option<f64> {
        self.table.find(&arm.name(), task).map(|r| r.mean_auc)
    }
}

/// Per-region AUCs of `logits` on `test`, followed by their mean.
pub fn task_aucs(logits: &[Vec<f64>], test: &[WorldSample]) -> Result<Vec<f64>> {
    let n_tasks = test.first().map_or(0, |s| s.labels.len());
    let mut out = Vec::with_capacity(n_tasks + 1);
    for t in 0..n_tasks {
        let scores: Vec<f64> = logits.iter().map(|l| l[t]).collect();
        let labels: Vec<u8> = test.iter().map(|s| s.labels[t]).collect();
        out.push(auc(&scores, &labels)?);
    }
    out.push(out.iter().sum::<f64>() / n_tasks as f64);
    Ok(out)
}

fn probe_arm(
    arm: Arm,
    seed: u64,
    encoders: &Encoders,
    start: &ParamVector,
    data: &SeedData,
    spec: &MatrixSpec,
) -> Result<ArmRun> {
    let cfg = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let epochs = match arm {
        Arm::ImageOnly => 2 * cfg.epochs_probe,
        Arm::Pretrained { .. } => cfg.epochs_probe,
    };
    let labeled = &data.train[..spec.n_labeled];
    let out = train_probe(&encoders.image, start, labeled, arm.mode(), epochs, &cfg)?;
    let images: Vec<_> = data.test.iter().map(|s| &s.image).collect();
    let logits = predict(&encoders.image, &out.image, &out.classifier, &out.head, &images)?;
    let frozen_intact = (arm.mode() == ProbeMode::Frozen).then(|| out.frozen_hash_before == out.frozen_hash_after);
    Ok(ArmRun {
        arm,
        seed,
        aucs: task_aucs(&logits, &data.test)?,
        probe_log: out.log,
        frozen_intact,
        frozen_hash: out.frozen_hash_after,
    })
}

/// Runs every selected arm for every seed. Each pretraining variant is
/// trained once per seed and shared by its frozen and tuned arms. A failing
/// arm is recorded and the rest continue.
pub fn run_experiment_matrix(spec: &MatrixSpec) -> Result<MatrixOutcome> {
    run_experiment_matrix_with(spec, &|_| {})
}

/// As [`run_experiment_matrix`], reporting progress lines to `progress`.
/// Seeds run in parallel on the rayon pool; results are merged in seed order,
/// so the outcome does not depend on the thread count.
pub fn run_experiment_matrix_with(spec: &MatrixSpec, progress: &(dyn Fn(&str) + Sync)) -> Result<MatrixOutcome> {
    spec.validate()?;
    let encoders = spec.model.build()?;
    let per_seed: Vec<Result<MatrixOutcome>> = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, &encoders, seed, progress))
        .collect();
    let mut outcome = MatrixOutcome::default();
    for part in per_seed {
        let part = part?;
        outcome.runs.extend(part.runs);
        outcome.pretrain_runs.extend(part.pretrain_runs);
        outcome.failures.extend(part.failures);
    }
    outcome.table = results_table(spec, &outcome.runs)?;
    Ok(outcome)
}

fn run_seed(spec: &MatrixSpec, encoders: &Encoders, seed: u64, progress: &(dyn Fn(&str) + Sync)) -> Result<MatrixOutcome> {
    let mut outcome = MatrixOutcome::default();
    let data = seed_data(spec, seed)?;
    let mut variants: Vec<(ObjectiveKind, BoundKind)> = Vec::new();
    for v in spec.arms.iter().filter_map(Arm::variant) {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    let mut pretrained: Vec<((ObjectiveKind, BoundKind), Result<ParamVector>)> = Vec::new();
    for (objective, bound) in variants {
        let name = variant_name(objective, bound);
        progress(&format!("seed {seed}: pretraining {name}"));
        let cfg = TrainConfig {
            objective,
            bound,
            seed,
            ..spec.train.clone()
        };
        let res = pretrain(&data.train, encoders, &cfg, None).map(|p| {
            outcome.pretrain_runs.push(PretrainRun {
                variant: name,
                seed,
                log: p.log,
            });
            p.params.image
        });
        pretrained.push(((objective, bound), res));
    }
    for &arm in &spec.arms {
        progress(&format!("seed {seed}: probing {arm}"));
        let start = match arm.variant() {
            None => Ok(encoders.image.init(&mut stream(seed, "init"))),
            Some(v) => match &pretrained.iter().find(|(k, _)| *k == v).expect("variant trained").1 {
                Ok(p) => Ok(p.clone()),
                Err(e) => Err(format!("pretraining failed: {e}")),
            },
        };
        let result = start.and_then(|p| probe_arm(arm, seed, encoders, &p, &data, spec).map_err(|e| e.to_string()));
        match result {
            Ok(run) => outcome.runs.push(run),
            Err(message) => outcome.failures.push(ArmFailure { arm, seed, message }),
        }
    }
    Ok(outcome)
}

/// One row per (arm, task) over the seeds that completed.
pub fn results_table(spec: &MatrixSpec, runs: &[ArmRun]) -> Result<ResultsTable> {
    let mut table = ResultsTable::default();
    for &arm in &spec.arms {
        let mine: Vec<&ArmRun> = runs.iter().filter(|r| r.arm == arm).collect();
        if mine.is_empty() {
            continue;
        }
        for (t, task) in spec.task_names().iter().enumerate() {
            let per_seed: Vec<f64> = mine.iter().map(|r| r.aucs[t]).collect();
            table.push(&arm.name(), arm.bound_label(), arm.mode().as_str(), task, &per_seed)?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{ImageEncoderSpec, TextEncoderSpec};

    #[test]
    fn arm_names_round_trip() {
        let all = Arm::all();
        assert_eq!(all.len(), 9);
        for a in &all {
            assert_eq!(a.name().parse::<Arm>().unwrap(), *a);
        }
        assert!("local-mi-nce-tuned".parse::<Arm>().is_err());
        assert_eq!(
            Arm::Pretrained {
                objective: ObjectiveKind::Local,
                bound: BoundKind::Cpc,
                mode: ProbeMode::Finetune
            }
            .name(),
            "local-mi-cpc-tuned"
        );
    }

    fn tiny_spec(arms: Vec<Arm>, seeds: Vec<u64>) -> MatrixSpec {
        MatrixSpec {
            world: WorldConfig {
                image_size: 16,
                tile_size: 4,
                ..WorldConfig::default()
            },
            model: ModelConfig {
                image: ImageEncoderSpec {
                    image_size: 16,
                    local_channels: vec![3, 4, 4],
                    global_channels: 4,
                    global_dim: 6,
                },
                text: TextEncoderSpec {
                    vocab_size: 64,
                    embed_dim: 4,
                    hidden_dim: 6,
                    feature_dim: 5,
                },
                critic_hidden: vec![8],
                ..ModelConfig::default()
            },
            train: TrainConfig {
                batch_size: 8,
                epochs_pretrain: 1,
                epochs_probe: 1,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            seeds,
            n_train: 24,
            n_test: 40,
            n_labeled: 16,
            arms,
        }
    }

    #[test]
    fn one_arm_one_seed_gives_one_row_per_task() {
        let spec = tiny_spec(vec![Arm::ImageOnly], vec![0]);
        let out = run_experiment_matrix(&spec).unwrap();
        assert!(out.failures.is_empty());
        assert_eq!(out.table.rows.len(), spec.task_names().len());
        assert!(out.table.rows.iter().all(|r| r.n_seeds == 1 && (0.0..=1.0).contains(&r.mean_auc)));
    }

    #[test]
    fn frozen_arm_checked_and_paired_data() {
        let frozen = Arm::Pretrained {
            objective: ObjectiveKind::Local,
            bound: BoundKind::MineDv,
            mode: ProbeMode::Frozen,
        };
        let spec = tiny_spec(vec![frozen, Arm::ImageOnly], vec![1, 2]);
        let out = run_experiment_matrix(&spec).unwrap();
        assert_eq!(out.runs.len(), 4);
        assert!(out.runs.iter().filter(|r| r.arm == frozen).all(|r| r.frozen_intact == Some(true)));
        assert_eq!(out.pretrain_runs.len(), 2);
        let a = seed_data(&spec, 1).unwrap();
        let b = seed_data(&spec, 1).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }
}
