//! Command-line front end.
//!
//! Output layout under the configured `out_dir`:
//!
//! ```text
//! data/seed<s>/{train,test}.{hdr,bin}, truth.csv, world.txt
//! estimate-mi/seed<s>.csv, estimate-mi/seed<s>-summary.txt
//! pretrain/seed<s>/pretrain-epoch<e>.ckpt, model.ckpt, log_steps.csv, log_epochs.csv
//! probe/seed<s>-<mode>/aucs.csv, log_steps.csv, summary.txt
//! matrix/manifest.csv, results.csv, results.txt, runs/<arm>/seed<s>.csv, curves/*.csv
//! report/results.txt, results.csv, curves/<arm>.csv
//! ```

pub mod config;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

pub use config::ExperimentConfig;

use crate::error::{Error, Result};
use crate::synthetic::io::{write_dataset, write_truth_csv, DatasetHeader};
use crate::synthetic::sample_world;
use crate::trainer::checkpoint::sha256_hex;
use crate::trainer::matrix::{run_experiment_matrix_with, seed_data, task_aucs, MatrixOutcome};
use crate::trainer::pretrain::{load_model, model_checkpoint, CheckpointSink};
use crate::trainer::probe::frozen_hash;
use crate::trainer::{pretrain, predict, train_gaussian_critic, train_probe, Arm, ProbeMode};
use crate::rng::stream;

pub const EXIT_OK: u8 = 0;
pub const EXIT_OTHER: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;
pub const EXIT_PARTIAL: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "limi", version, about = "Image-text mutual information experiments on synthetic worlds")]
pub struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed list with a single seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Restricts `matrix` to the named arms (repeatable).
    #[arg(long, global = true)]
    pub arm: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Frozen,
    Finetune,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train/test datasets and the ground-truth MI table.
    GenData,
    /// Train a critic on Gaussian pairs and compare with the analytic MI.
    EstimateMi,
    /// Pretrain encoders and critic with the configured objective.
    Pretrain,
    /// Train a classifier probe on a pretrained image encoder.
    Probe {
        #[arg(long, value_enum, default_value = "frozen")]
        mode: ModeArg,
        /// Checkpoint to start from; defaults to the pretrain output.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run the experiment matrix and write the results table.
    Matrix,
    /// Render tables and learning curves from a matrix run.
    Report {
        /// Output directory of a previous run; defaults to the configured one.
        dir: Option<PathBuf>,
    },
    /// Print the effective configuration in canonical form.
    ShowConfig,
}

/// Outcome of a subcommand that may have completed only partly.
pub enum Status {
    Done,
    Partial(String),
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::Io(_) | Error::Format { .. } => EXIT_IO,
        Error::NumericAbort { .. } | Error::NonFinite { .. } | Error::NonFiniteObjective => EXIT_NUMERIC,
        _ => EXIT_OTHER,
    }
}

/// Parses `args`, runs the command, and maps the result to an exit code.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(exit_code(&e));
    }
    match run(&cli) {
        Ok(Status::Done) => ExitCode::from(EXIT_OK),
        Ok(Status::Partial(msg)) => {
            eprintln!("incomplete: {msg}");
            ExitCode::from(EXIT_PARTIAL)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Caps the worker pool at `LIMI_THREADS` when set.
fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var("LIMI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidConfig(format!("LIMI_THREADS must be a positive integer, got `{v}`")))?;
    // A pool may already exist when embedded in tests; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

pub fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).map_err(|e| match e {
            Error::Io(io) => Error::InvalidConfig(format!("cannot read {}: {io}", p.display())),
            other => other,
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
        cfg.gaussian.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    if !cli.arm.is_empty() {
        cfg.arms = cli.arm.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<Status> {
    if let Command::Report { dir } = &cli.command {
        let dir = match dir {
            Some(d) => d.clone(),
            None => cli.out.clone().map_or_else(|| load_config(cli).map(|c| c.out_dir), Ok)?,
        };
        return report::cmd_report(&dir);
    }
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::GenData => cmd_gen_data(&cfg),
        Command::EstimateMi => cmd_estimate_mi(&cfg),
        Command::Pretrain => cmd_pretrain(&cfg),
        Command::Probe { mode, checkpoint } => {
            let mode = match mode {
                ModeArg::Frozen => ProbeMode::Frozen,
                ModeArg::Finetune => ProbeMode::Finetune,
            };
            cmd_probe(&cfg, mode, checkpoint.as_deref())
        }
        Command::Matrix => cmd_matrix(&cfg),
        Command::ShowConfig => {
            print!("{}", cfg.to_canonical());
            Ok(Status::Done)
        }
        Command::Report { .. } => unreachable!("handled above"),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(cfg.to_canonical().as_bytes())
}

pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<Status> {
    let spec = cfg.matrix_spec(Arm::all());
    for &seed in &cfg.seeds {
        let dir = cfg.out_dir.join("data").join(format!("seed{seed}"));
        let world = sample_world(&cfg.world, &mut stream(seed, "world"))?;
        let data = seed_data(&spec, seed)?;
        for (name, samples) in [("train", &data.train), ("test", &data.test)] {
            let header = DatasetHeader {
                samples: samples.len(),
                image_size: cfg.world.image_size,
                n_regions: cfg.world.n_regions,
                world: world.fingerprint(),
                seed,
            };
            write_dataset(&dir, name, &header, samples)?;
        }
        let truth = world.ground_truth()?;
        write_truth_csv(&dir.join("truth.csv"), &truth)?;
        write_file(&dir.join("world.txt"), format!("{}\n", world.fingerprint()).as_bytes())?;
        println!("seed {seed}: {} train, {} test samples in {}", data.train.len(), data.test.len(), dir.display());
        for t in &truth {
            println!("  region {} I(patch; sentence) = {:.6} nats", t.region, t.mi_patch_sentence);
        }
    }
    Ok(Status::Done)
}

pub fn cmd_estimate_mi(cfg: &ExperimentConfig) -> Result<Status> {
    let g = &cfg.gaussian;
    let run = train_gaussian_critic(g)?;
    let dir = cfg.out_dir.join("estimate-mi");
    let mut csv = Vec::new();
    run.write_csv(&mut csv)?;
    write_file(&dir.join(format!("seed{}.csv", g.seed)), &csv)?;
    let max_est = run.log.estimates().into_iter().fold(f64::NEG_INFINITY, f64::max);
    let summary = format!(
        "bound {}\nsteps {}\nnegatives {}\nanalytic_mi {:.6}\nfinal_smoothed {:.6}\nmax_step_estimate {:.6}\ngap {:.6}\n",
        g.bound.as_str(),
        g.steps,
        g.negatives(),
        run.analytic_mi,
        run.final_smoothed(),
        max_est,
        run.analytic_mi - run.final_smoothed(),
    );
    write_file(&dir.join(format!("seed{}-summary.txt", g.seed)), summary.as_bytes())?;
    print!("{summary}");
    Ok(Status::Done)
}

fn first_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seeds[0]
}

pub fn cmd_pretrain(cfg: &ExperimentConfig) -> Result<Status> {
    let seed = first_seed(cfg);
    let spec = cfg.matrix_spec(Arm::all());
    let data = seed_data(&spec, seed)?;
    let encoders = cfg.model.build()?;
    let dir = cfg.out_dir.join("pretrain").join(format!("seed{seed}"));
    let hash = config_hash(cfg);
    let sink = CheckpointSink {
        dir: dir.clone(),
        config_hash: hash.clone(),
    };
    let out = pretrain(&data.train, &encoders, &cfg.train_for(seed), Some(&sink))?;
    model_checkpoint(&out.params, &hash, seed).write(&dir.join("model.ckpt"))?;
    out.log.save(&dir, "log")?;
    let last = out.log.steps.last().expect("at least one step");
    println!(
        "pretrained {}-{} seed {seed}: {} steps, final estimate {:.6} nats",
        cfg.train.objective.as_str(),
        cfg.train.bound.as_str(),
        out.log.steps.len(),
        last.estimate_nats
    );
    println!("checkpoint {}", dir.join("model.ckpt").display());
    Ok(Status::Done)
}

pub fn cmd_probe(cfg: &ExperimentConfig, mode: ProbeMode, checkpoint: Option<&Path>) -> Result<Status> {
    let seed = first_seed(cfg);
    let default_ckpt = cfg.out_dir.join("pretrain").join(format!("seed{seed}")).join("model.ckpt");
    let ckpt_path = checkpoint.unwrap_or(&default_ckpt);
    let (_, params) = load_model(ckpt_path)?;
    let encoders = cfg.model.build()?;
    let spec = cfg.matrix_spec(Arm::all());
    let data = seed_data(&spec, seed)?;
    let before = frozen_hash(&encoders.image, &params.image)?;
    let train_cfg = cfg.train_for(seed);
    let out = train_probe(
        &encoders.image,
        &params.image,
        &data.train[..cfg.n_labeled],
        mode,
        train_cfg.epochs_probe,
        &train_cfg,
    )?;
    let images: Vec<_> = data.test.iter().map(|s| &s.image).collect();
    let logits = predict(&encoders.image, &out.image, &out.classifier, &out.head, &images)?;
    let aucs = task_aucs(&logits, &data.test)?;
    let dir = cfg.out_dir.join("probe").join(format!("seed{seed}-{}", mode.as_str()));
    let mut csv = String::from("task,auc\n");
    for (task, a) in spec.task_names().iter().zip(&aucs) {
        csv.push_str(&format!("{task},{a:.6}\n"));
    }
    write_file(&dir.join("aucs.csv"), csv.as_bytes())?;
    out.log.save(&dir, "log")?;
    let after = frozen_hash(&encoders.image, &out.image)?;
    let summary = format!(
        "mode {}\nfrozen_hash_before {before}\nfrozen_hash_after {after}\nfrozen_unchanged {}\nmean_auc {:.6}\n",
        mode.as_str(),
        before == after,
        aucs.last().copied().unwrap_or(f64::NAN)
    );
    write_file(&dir.join("summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    if mode == ProbeMode::Frozen && before != after {
        return Err(Error::InvalidInput("frozen segments changed during probe training".into()));
    }
    Ok(Status::Done)
}

fn log_csv(log: &crate::trainer::TrainLog) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    log.write_steps_csv(&mut buf)?;
    Ok(buf)
}

/// Writes every artifact of a matrix run under `dir`.
pub fn write_matrix_outputs(dir: &Path, spec_tasks: &[String], outcome: &MatrixOutcome, planned: &[(Arm, u64)]) -> Result<()> {
    let mut manifest = String::from("arm,seed,status,message\n");
    for &(arm, seed) in planned {
        if outcome.runs.iter().any(|r| r.arm == arm && r.seed == seed) {
            manifest.push_str(&format!("{arm},{seed},complete,\n"));
        } else {
            let msg = outcome
                .failures
                .iter()
                .find(|f| f.arm == arm && f.seed == seed)
                .map_or_else(|| "not run".to_string(), |f| f.message.replace([',', '\n'], ";"));
            manifest.push_str(&format!("{arm},{seed},failed,{msg}\n"));
        }
    }
    for r in &outcome.runs {
        let mut csv = String::from("task,auc\n");
        for (task, a) in spec_tasks.iter().zip(&r.aucs) {
            csv.push_str(&format!("{task},{a:.17}\n"));
        }
        write_file(&dir.join("runs").join(r.arm.name()).join(format!("seed{}.csv", r.seed)), csv.as_bytes())?;
        write_file(
            &dir.join("curves").join(format!("probe-{}-seed{}.csv", r.arm, r.seed)),
            &log_csv(&r.probe_log)?,
        )?;
        if let Some(intact) = r.frozen_intact {
            write_file(
                &dir.join("runs").join(r.arm.name()).join(format!("seed{}-frozen.txt", r.seed)),
                format!("frozen_hash {}\nfrozen_unchanged {intact}\n", r.frozen_hash).as_bytes(),
            )?;
        }
    }
    for p in &outcome.pretrain_runs {
        write_file(
            &dir.join("curves").join(format!("pretrain-{}-seed{}.csv", p.variant, p.seed)),
            &log_csv(&p.log)?,
        )?;
    }
    write_file(&dir.join("manifest.csv"), manifest.as_bytes())?;
    write_file(&dir.join("results.csv"), outcome.table.to_csv_string().as_bytes())?;
    write_file(&dir.join("results.txt"), outcome.table.render_text().as_bytes())?;
    Ok(())
}

pub fn cmd_matrix(cfg: &ExperimentConfig) -> Result<Status> {
    let arms = cfg.parsed_arms()?;
    let spec = cfg.matrix_spec(arms.clone());
    let outcome = run_experiment_matrix_with(&spec, &|line| eprintln!("{line}"))?;
    let planned: Vec<(Arm, u64)> = cfg.seeds.iter().flat_map(|&s| arms.iter().map(move |&a| (a, s))).collect();
    let dir = cfg.out_dir.join("matrix");
    write_matrix_outputs(&dir, &spec.task_names(), &outcome, &planned)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(outcome.table.render_text().as_bytes())?;
    if let Some(bad) = outcome.runs.iter().find(|r| r.frozen_intact == Some(false)) {
        return Err(Error::InvalidInput(format!("{} seed {} changed frozen segments", bad.arm, bad.seed)));
    }
    if outcome.failures.is_empty() {
        Ok(Status::Done)
    } else {
        let list: Vec<String> = outcome.failures.iter().map(|f| format!("{} seed {}: {}", f.arm, f.seed, f.message)).collect();
        Ok(Status::Partial(format!("{} arm runs failed\n  {}", list.len(), list.join("\n  "))))
    }
}
