//! Rendering of a finished (or partly finished) matrix directory.

use std::fs;
use std::path::Path;

use super::Status;
use crate::downstream_eval::ResultsTable;
use crate::error::{Error, Result};
use crate::trainer::Arm;

struct ManifestRow {
    arm: String,
    seed: u64,
    status: String,
    message: String,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    if lines.next() != Some("arm,seed,status,message") {
        return Err(Error::Format {
            path: path.to_path_buf(),
            reason: "unexpected manifest header".into(),
        });
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.splitn(4, ',').collect();
            let bad = || Error::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: `{line}`", i + 2),
            };
            if f.len() != 4 {
                return Err(bad());
            }
            Ok(ManifestRow {
                arm: f[0].to_string(),
                seed: f[1].parse().map_err(|_| bad())?,
                status: f[2].to_string(),
                message: f[3].to_string(),
            })
        })
        .collect()
}

fn read_aucs(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .skip(1)
        .map(|l| {
            let (task, v) = l.split_once(',').ok_or_else(|| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad row `{l}`"),
            })?;
            let v = v.parse().map_err(|_| Error::Format {
                path: path.to_path_buf(),
                reason: format!("bad AUC `{v}`"),
            })?;
            Ok((task.to_string(), v))
        })
        .collect()
}

/// Concatenates step logs of several seeds into one `seed,...` CSV.
fn merge_curves(dir: &Path, prefix: &str, seeds: &[u64]) -> Result<Option<String>> {
    let mut out: Option<String> = None;
    for seed in seeds {
        let path = dir.join(format!("{prefix}-seed{seed}.csv"));
        if !path.exists() {
            continue;
        }
        let text = fs::read_to_string(&path)?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let buf = out.get_or_insert_with(|| format!("seed,{header}\n"));
        for l in lines {
            buf.push_str(&format!("{seed},{l}\n"));
        }
    }
    Ok(out)
}

/// Rebuilds the results table from per-run AUC files. Exits cleanly only
/// if every run listed in the manifest completed.
pub fn cmd_report(dir: &Path) -> Result<Status> {
    let matrix = dir.join("matrix");
    let manifest_path = matrix.join("manifest.csv");
    if !manifest_path.exists() {
        return Ok(Status::Partial(format!(
            "no matrix manifest under {}; 0 completed runs found",
            dir.display()
        )));
    }
    let manifest = read_manifest(&manifest_path)?;
    let mut arms: Vec<String> = Vec::new();
    for row in &manifest {
        if !arms.contains(&row.arm) {
            arms.push(row.arm.clone());
        }
    }
    let mut missing = Vec::new();
    let mut table = ResultsTable::default();
    let out = dir.join("report");
    for arm_name in &arms {
        let arm: Arm = arm_name.parse()?;
        let mut per_task: Vec<(String, Vec<f64>)> = Vec::new();
        let mut seeds = Vec::new();
        for row in manifest.iter().filter(|r| &r.arm == arm_name) {
            let path = matrix.join("runs").join(arm_name).join(format!("seed{}.csv", row.seed));
            if row.status != "complete" || !path.exists() {
                let why = if row.status != "complete" { row.message.clone() } else { "AUC file missing".into() };
                missing.push(format!("{arm_name} seed {}: {why}", row.seed));
                continue;
            }
            seeds.push(row.seed);
            for (task, v) in read_aucs(&path)? {
                match per_task.iter_mut().find(|(t, _)| *t == task) {
                    Some((_, vs)) => vs.push(v),
                    None => per_task.push((task, vec![v])),
                }
            }
        }
        for (task, vs) in &per_task {
            table.push(arm_name, arm.bound_label(), arm.mode().as_str(), task, vs)?;
        }
        let curves = matrix.join("curves");
        if let Some(csv) = merge_curves(&curves, &format!("probe-{arm_name}"), &seeds)? {
            super::write_file(&out.join("curves").join(format!("{arm_name}.csv")), csv.as_bytes())?;
        }
        if let Some(variant) = arm_name.strip_suffix("-frozen").or_else(|| arm_name.strip_suffix("-tuned")) {
            if let Some(csv) = merge_curves(&curves, &format!("pretrain-{variant}"), &seeds)? {
                super::write_file(&out.join("curves").join(format!("pretrain-{variant}.csv")), csv.as_bytes())?;
            }
        }
    }
    let text = table.render_text();
    super::write_file(&out.join("results.txt"), text.as_bytes())?;
    super::write_file(&out.join("results.csv"), table.to_csv_string().as_bytes())?;
    print!("{text}");
    let complete = manifest.len() - missing.len();
    if missing.is_empty() {
        println!("{complete} of {} runs complete", manifest.len());
        Ok(Status::Done)
    } else {
        Ok(Status::Partial(format!(
            "{complete} of {} runs complete; missing or failed:\n  {}",
            manifest.len(),
            missing.join("\n  ")
        )))
    }
}
