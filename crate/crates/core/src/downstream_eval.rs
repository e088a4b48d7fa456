//! AUC and results tables.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};

/// Area under the ROC curve in the Mann-Whitney form: the fraction of
/// (positive, negative) pairs ordered correctly, ties counted one half.
///
/// Computed from average ranks in `O(n log n)`. The rank sum of positives is
/// accumulated in half-units so the result is exact for any input size this
/// crate handles.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the 1-based rank sum of the positives.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the average (i + j + 2) / 2.
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] != 0).count() as u128;
        twice_rank_sum += pos_in_group * (i + j + 2) as u128;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    // U = R - P(P+1)/2, so 2U = 2R - P(P+1).
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2 * p * n) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    /// Population standard deviation.
    pub stdev: f64,
    pub n: usize,
}

pub fn aggregate(values: &[f64]) -> Result<Aggregate> {
    if values.is_empty() {
        return Err(Error::InvalidInput("aggregate needs at least one value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok(Aggregate {
        mean,
        stdev: var.sqrt(),
        n: sorted.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub arm: String,
    pub bound: String,
    pub probe_mode: String,
    pub task: String,
    pub mean_auc: f64,
    pub stdev: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
}

pub const RESULTS_HEADER: [&str; 7] = ["arm", "bound", "probe_mode", "task", "mean_auc", "stdev", "n_seeds"];

impl ResultsTable {
    pub fn push(&mut self, arm: &str, bound: &str, probe_mode: &str, task: &str, per_seed: &[f64]) -> Result<()> {
        let a = aggregate(per_seed)?;
        self.rows.push(ResultRow {
            arm: arm.into(),
            bound: bound.into(),
            probe_mode: probe_mode.into(),
            task: task.into(),
            mean_auc: a.mean,
            stdev: a.stdev,
            n_seeds: a.n,
        });
        Ok(())
    }

    pub fn find(&self, arm: &str, task: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.arm == arm && r.task == task)
    }

    fn cells(r: &ResultRow) -> [String; 7] {
        [
            r.arm.clone(),
            r.bound.clone(),
            r.probe_mode.clone(),
            r.task.clone(),
            format!("{:.6}", r.mean_auc),
            format!("{:.6}", r.stdev),
            r.n_seeds.to_string(),
        ]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{}", RESULTS_HEADER.join(","))?;
        for r in &self.rows {
            writeln!(w, "{}", Self::cells(r).join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != RESULTS_HEADER.join(",") {
            return Err(Error::InvalidInput(format!("unexpected results header `{header}`")));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidInput(format!("results line {}: `{line}`", i + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            rows.push(ResultRow {
                arm: f[0].into(),
                bound: f[1].into(),
                probe_mode: f[2].into(),
                task: f[3].into(),
                mean_auc: f[4].parse().map_err(|_| bad())?,
                stdev: f[5].parse().map_err(|_| bad())?,
                n_seeds: f[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(Self { rows })
    }

    /// Fixed-width table for terminal output.
    pub fn render_text(&self) -> String {
        let body: Vec<[String; 7]> = self.rows.iter().map(Self::cells).collect();
        let mut widths: Vec<usize> = RESULTS_HEADER.iter().map(|h| h.len()).collect();
        for row in &body {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .enumerate()
                .map(|(i, (c, w))| if i >= 4 { format!("{c:>w$}") } else { format!("{c:<w$}") })
                .collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        let header: Vec<String> = RESULTS_HEADER.iter().map(|s| s.to_string()).collect();
        line(&mut out, &header);
        let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
        line(&mut out, &rule);
        for row in &body {
            line(&mut out, row);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &si) in scores.iter().enumerate() {
            for (j, &sj) in scores.iter().enumerate() {
                if labels[i] == 1 && labels[j] == 0 {
                    den += 1.0;
                    if si > sj {
                        num += 1.0;
                    } else if si == sj {
                        num += 0.5;
                    }
                }
            }
        }
        num / den
    }

    #[test]
    fn hand_values() {
        let s = [0.9, 0.8, 0.3, 0.2];
        assert_eq!(auc(&s, &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(auc(&s, &[1, 0, 1, 0]).unwrap(), 0.75);
        assert_eq!(auc(&[0.4; 5], &[1, 0, 1, 0, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_error() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::SingleClass)));
        assert!(auc(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn aggregate_values() {
        let a = aggregate(&[0.8]).unwrap();
        assert_eq!((a.mean, a.stdev, a.n), (0.8, 0.0, 1));
        let a = aggregate(&[0.8, 0.9]).unwrap();
        assert!((a.mean - 0.85).abs() < 1e-15);
        assert!((a.stdev - 0.05).abs() < 1e-15);
        assert_eq!(aggregate(&[0.9, 0.8]).unwrap(), a);
    }

    #[test]
    fn csv_round_trip_and_text() {
        let mut t = ResultsTable::default();
        t.push("local-mi-cpc-tuned", "cpc", "finetune", "region0", &[0.7, 0.8]).unwrap();
        t.push("image-only", "none", "finetune", "mean", &[0.6]).unwrap();
        let csv = t.to_csv_string();
        assert_eq!(csv.lines().count(), 3);
        let back = ResultsTable::read_csv(&csv).unwrap();
        assert_eq!(back.to_csv_string(), csv);
        let text = t.render_text();
        assert_eq!(text.lines().count(), 4);
        assert!(text.contains("0.750000"));
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            data in prop::collection::vec((0u8..8, 0u8..2), 2..200)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| f64::from(d.0) / 4.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            prop_assert_eq!(auc(&scores, &labels).unwrap(), brute(&scores, &labels));
        }

        #[test]
        fn monotone_invariance_and_reversal(
            data in prop::collection::vec((-1e3f64..1e3, 0u8..2), 2..100)
        ) {
            let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
            let labels: Vec<u8> = data.iter().map(|d| d.1).collect();
            prop_assume!(labels.contains(&0) && labels.contains(&1));
            let mut sorted = scores.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            let a = auc(&scores, &labels).unwrap();
            let t: Vec<f64> = scores.iter().map(|s| (s / 100.0).exp() + 3.0 * s).collect();
            prop_assert_eq!(auc(&t, &labels).unwrap(), a);
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            prop_assert!((a + auc(&neg, &labels).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
