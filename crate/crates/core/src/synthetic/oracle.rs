//! Exact information quantities on finite joint tables.

use crate::error::{Error, Result};

const NORM_TOL: f64 = 1e-12;

fn check_table(table: &[Vec<f64>]) -> Result<()> {
    if table.is_empty() || table[0].is_empty() {
        return Err(Error::InvalidInput("empty probability table".into()));
    }
    let w = table[0].len();
    if table.iter().any(|r| r.len() != w) {
        return Err(Error::InvalidInput("ragged probability table".into()));
    }
    if table.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput("probability table has negative or non-finite entries".into()));
    }
    let total: f64 = table.iter().flatten().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(total));
    }
    Ok(())
}

pub fn row_marginal(table: &[Vec<f64>]) -> Vec<f64> {
    table.iter().map(|r| r.iter().sum()).collect()
}

pub fn col_marginal(table: &[Vec<f64>]) -> Vec<f64> {
    let mut out = vec![0.0; table.first().map_or(0, Vec::len)];
    for row in table {
        for (o, p) in out.iter_mut().zip(row) {
            *o += p;
        }
    }
    out
}

/// `I(A; B)` in nats for a joint table `p[a][b]`, with `0 log 0 = 0`.
pub fn true_mi_discrete(table: &[Vec<f64>]) -> Result<f64> {
    check_table(table)?;
    Ok(mi_unchecked(table))
}

fn mi_unchecked(table: &[Vec<f64>]) -> f64 {
    let pa = row_marginal(table);
    let pb = col_marginal(table);
    let mut mi = 0.0;
    for (row, &a) in table.iter().zip(&pa) {
        for (&p, &b) in row.iter().zip(&pb) {
            if p > 0.0 {
                mi += p * (p / (a * b)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Exact Donsker-Varadhan objective `E_p[f] - ln E_{p_a p_b}[e^f]` for a
/// critic given as a table `f[a][b]`.
pub fn dv_exact(table: &[Vec<f64>], critic: &[Vec<f64>]) -> Result<f64> {
    check_table(table)?;
    if critic.len() != table.len() || critic.iter().zip(table).any(|(c, t)| c.len() != t.len()) {
        return Err(Error::InvalidInput("critic table shape differs from joint table".into()));
    }
    let pa = row_marginal(table);
    let pb = col_marginal(table);
    let mut joint = 0.0;
    let mut terms = Vec::new();
    for ((prow, frow), &a) in table.iter().zip(critic).zip(&pa) {
        for ((&p, &f), &b) in prow.iter().zip(frow).zip(&pb) {
            if p > 0.0 {
                joint += p * f;
            }
            if a * b > 0.0 {
                terms.push((a * b).ln() + f);
            }
        }
    }
    Ok(joint - crate::numeric::log_sum_exp(&terms))
}

/// The critic `ln p(a,b) / (p(a) p(b))` that attains the DV supremum.
pub fn log_ratio_critic(table: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    check_table(table)?;
    let pa = row_marginal(table);
    let pb = col_marginal(table);
    Ok(table
        .iter()
        .zip(&pa)
        .map(|(row, &a)| row.iter().zip(&pb).map(|(&p, &b)| (p / (a * b)).ln()).collect())
        .collect())
}

/// `I(A; B | C)` for a table indexed `p[c][a][b]`.
pub fn conditional_mi(table: &[Vec<Vec<f64>>]) -> Result<f64> {
    let total: f64 = table.iter().flatten().flatten().sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(total));
    }
    let mut out = 0.0;
    for slice in table {
        let pc: f64 = slice.iter().flatten().sum();
        if pc <= 0.0 {
            continue;
        }
        let cond: Vec<Vec<f64>> = slice.iter().map(|r| r.iter().map(|p| p / pc).collect()).collect();
        out += pc * mi_unchecked(&cond);
    }
    Ok(out)
}

/// Plug-in MI estimate from paired symbol observations.
pub fn plugin_mi(a: &[usize], b: &[usize], na: usize, nb: usize) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidInput("plug-in MI needs equal, non-empty samples".into()));
    }
    let mut counts = vec![vec![0.0; nb]; na];
    for (&x, &y) in a.iter().zip(b) {
        counts[x][y] += 1.0;
    }
    let n = a.len() as f64;
    for row in &mut counts {
        for c in row.iter_mut() {
            *c /= n;
        }
    }
    Ok(mi_unchecked(&counts))
}
