use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPairConfig {
    pub dim: usize,
    /// One correlation per dimension; a single value is broadcast.
    pub rho: Vec<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

impl GaussianPairConfig {
    pub fn rhos(&self) -> Result<Vec<f64>> {
        let r = match self.rho.len() {
            1 => vec![self.rho[0]; self.dim],
            n if n == self.dim => self.rho.clone(),
            n => {
                return Err(Error::InvalidConfig(format!(
                    "rho has {n} entries for dimension {}",
                    self.dim
                )))
            }
        };
        if self.dim == 0 {
            return Err(Error::InvalidConfig("gaussian dim must be at least 1".into()));
        }
        if let Some(bad) = r.iter().find(|x| !(x.abs() < 1.0)) {
            return Err(Error::InvalidConfig(format!("|rho| must be below 1, got {bad}")));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPairs {
    pub u: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub analytic_mi: f64,
}

/// `sum_i -0.5 ln(1 - rho_i^2)`.
pub fn gaussian_mi(rhos: &[f64]) -> f64 {
    rhos.iter().map(|r| -0.5 * (1.0 - r * r).ln()).sum()
}

/// Per dimension, `v = rho u + sqrt(1 - rho^2) e` with `u, e` standard normal.
pub fn gaussian_pairs<R: Rng + ?Sized>(config: &GaussianPairConfig, rng: &mut R) -> Result<GaussianPairs> {
    let rhos = config.rhos()?;
    let mut u = Vec::with_capacity(config.n_samples);
    let mut v = Vec::with_capacity(config.n_samples);
    for _ in 0..config.n_samples {
        let mut a = Vec::with_capacity(config.dim);
        let mut b = Vec::with_capacity(config.dim);
        for &r in &rhos {
            let x: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            a.push(x);
            b.push(r * x + (1.0 - r * r).sqrt() * e);
        }
        u.push(a);
        v.push(b);
    }
    Ok(GaussianPairs {
        u,
        v,
        analytic_mi: gaussian_mi(&rhos),
    })
}
