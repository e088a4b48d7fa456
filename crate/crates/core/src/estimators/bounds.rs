//! Donsker-Varadhan and InfoNCE lower bounds computed from critic scores.
//!
//! Every bound is returned together with its gradient with respect to the
//! scores, so callers can chain into the critic and the encoders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    MineDv,
    Cpc,
}

impl BoundKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundKind::MineDv => "mine_dv",
            BoundKind::Cpc => "cpc",
        }
    }

    /// Short label used in arm names.
    pub fn short(self) -> &'static str {
        match self {
            BoundKind::MineDv => "mine",
            BoundKind::Cpc => "cpc",
        }
    }
}

/// A bound value in nats with the sample sizes that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MIEstimate {
    pub value_nats: f64,
    pub bound: BoundKind,
    pub n_joint: usize,
    /// Negatives per joint sample.
    pub n_negatives: usize,
    /// InfoNCE only: whether `ln(K + 1)` has been added.
    pub normalized: bool,
}

/// Critic scores on matched pairs (`joint[b]`) and on `K` mismatched
/// partners per row (`negatives[b][k]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    pub joint: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

impl ScoreBatch {
    pub fn new(joint: Vec<f64>, negatives: Vec<Vec<f64>>) -> Result<Self> {
        let b = Self { joint, negatives };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.joint.is_empty() || self.joint.len() != self.negatives.len() {
            return Err(Error::InvalidInput(format!(
                "score batch has {} joint rows and {} negative rows",
                self.joint.len(),
                self.negatives.len()
            )));
        }
        let k = self.negatives[0].len();
        if k == 0 || self.negatives.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(
                "every row needs the same number K >= 1 of negatives".into(),
            ));
        }
        let finite = self.joint.iter().all(|v| v.is_finite())
            && self.negatives.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("non-finite critic score".into()));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.joint.len()
    }

    pub fn k(&self) -> usize {
        self.negatives[0].len()
    }
}

/// Gradient of a bound value with respect to each score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrads {
    pub joint: Vec<f64>,
    pub negatives: Vec<Vec<f64>>,
}

/// Exponential moving average of `mean exp(f)` over negatives, kept in log
/// space, used to debias the Donsker-Varadhan gradient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DvEma {
    pub decay: f64,
    pub log_mean: Option<f64>,
}

impl Default for DvEma {
    fn default() -> Self {
        Self {
            decay: 0.99,
            log_mean: None,
        }
    }
}

impl DvEma {
    fn update(&mut self, log_batch_mean: f64) -> f64 {
        let next = match self.log_mean {
            None => log_batch_mean,
            Some(prev) => {
                // log(decay * e^prev + (1 - decay) * e^cur)
                let a = prev + self.decay.ln();
                let b = log_batch_mean + (1.0 - self.decay).ln();
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
        };
        self.log_mean = Some(next);
        next
    }
}

/// `mean(joint) - log(mean(exp(negatives)))` over all negatives of the batch.
pub fn dv_bound(scores: &ScoreBatch) -> MIEstimate {
    dv_bound_grad(scores, None).0
}

/// DV bound and its score gradient. With an EMA, the gradient of the
/// log-partition term uses the running denominator instead of the batch one;
/// the returned value is unaffected.
pub fn dv_bound_grad(scores: &ScoreBatch, ema: Option<&mut DvEma>) -> (MIEstimate, ScoreGrads) {
    let b = scores.rows();
    let k = scores.k();
    let n = (b * k) as f64;
    let flat: Vec<f64> = scores.negatives.iter().flatten().copied().collect();
    let lse = log_sum_exp(&flat);
    let log_mean = lse - n.ln();
    let mean_joint = scores.joint.iter().sum::<f64>() / b as f64;
    let value = mean_joint - log_mean;
    let denom = match ema {
        Some(e) => e.update(log_mean),
        None => log_mean,
    };
    let joint = vec![1.0 / b as f64; b];
    let negatives = scores
        .negatives
        .iter()
        .map(|row| row.iter().map(|&s| -(s - denom).exp() / n).collect())
        .collect();
    (
        MIEstimate {
            value_nats: value,
            bound: BoundKind::MineDv,
            n_joint: b,
            n_negatives: k,
            normalized: false,
        },
        ScoreGrads { joint, negatives },
    )
}

/// `mean_b [joint_b - log(exp(joint_b) + sum_k exp(neg_bk))]`, plus
/// `ln(K + 1)` when `normalized`.
pub fn infonce_bound(joint: &[f64], negatives: &[Vec<f64>], normalized: bool) -> Result<MIEstimate> {
    let batch = ScoreBatch::new(joint.to_vec(), negatives.to_vec())?;
    Ok(infonce_bound_grad(&batch, normalized).0)
}

pub fn infonce_bound_grad(scores: &ScoreBatch, normalized: bool) -> (MIEstimate, ScoreGrads) {
    let b = scores.rows();
    let k = scores.k();
    let inv_b = 1.0 / b as f64;
    let mut total = 0.0;
    let mut g_joint = Vec::with_capacity(b);
    let mut g_neg = Vec::with_capacity(b);
    let mut cand = Vec::with_capacity(k + 1);
    for (&j, row) in scores.joint.iter().zip(&scores.negatives) {
        cand.clear();
        cand.push(j);
        cand.extend_from_slice(row);
        let lse = log_sum_exp(&cand);
        total += j - lse;
        g_joint.push((1.0 - (j - lse).exp()) * inv_b);
        g_neg.push(row.iter().map(|&s| -(s - lse).exp() * inv_b).collect());
    }
    let mut value = total * inv_b;
    if normalized {
        value += ((k + 1) as f64).ln();
    }
    (
        MIEstimate {
            value_nats: value,
            bound: BoundKind::Cpc,
            n_joint: b,
            n_negatives: k,
            normalized,
        },
        ScoreGrads {
            joint: g_joint,
            negatives: g_neg,
        },
    )
}

/// Evaluates either bound with gradients. InfoNCE is reported normalized.
pub fn bound_grad(
    kind: BoundKind,
    scores: &ScoreBatch,
    ema: Option<&mut DvEma>,
) -> (MIEstimate, ScoreGrads) {
    match kind {
        BoundKind::MineDv => dv_bound_grad(scores, ema),
        BoundKind::Cpc => infonce_bound_grad(scores, true),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::max_relative_error;
    use proptest::prelude::*;

    const LN: fn(f64) -> f64 = f64::ln;

    #[test]
    fn dv_constant_critic_is_zero() {
        let s = ScoreBatch::new(vec![1.7; 3], vec![vec![1.7; 4]; 3]).unwrap();
        assert!(dv_bound(&s).value_nats.abs() < 1e-12);
    }

    #[test]
    fn dv_hand_value() {
        let s = ScoreBatch::new(vec![LN(4.0)], vec![vec![0.0, 0.0]]).unwrap();
        assert!((dv_bound(&s).value_nats - LN(4.0)).abs() < 1e-15);
    }

    #[test]
    fn infonce_constant_critic() {
        for k in [1usize, 3, 15] {
            let raw = infonce_bound(&[0.3; 2], &vec![vec![0.3; k]; 2], false).unwrap();
            let norm = infonce_bound(&[0.3; 2], &vec![vec![0.3; k]; 2], true).unwrap();
            assert!((raw.value_nats + LN((k + 1) as f64)).abs() < 1e-12);
            assert!(norm.value_nats.abs() < 1e-12);
        }
    }

    #[test]
    fn infonce_hand_value() {
        let raw = infonce_bound(&[LN(9.0)], &[vec![0.0, 0.0]], false).unwrap();
        assert!((raw.value_nats - (LN(9.0) - LN(11.0))).abs() < 1e-15);
        let norm = infonce_bound(&[LN(9.0)], &[vec![0.0, 0.0]], true).unwrap();
        assert!((norm.value_nats - (LN(9.0) - LN(11.0) + LN(3.0))).abs() < 1e-15);
    }

    #[test]
    fn infonce_separating_critic_approaches_cap() {
        let k = 7;
        let est = infonce_bound(&[50.0], &[vec![-50.0; k]], true).unwrap();
        let cap = LN((k + 1) as f64);
        assert!(est.value_nats <= cap);
        assert!(cap - est.value_nats < 1e-12);
    }

    #[test]
    fn dv_is_overflow_safe() {
        let s = ScoreBatch::new(vec![800.0], vec![vec![900.0, 700.0]]).unwrap();
        assert!(dv_bound(&s).value_nats.is_finite());
    }

    #[test]
    fn ragged_batch_rejected() {
        assert!(ScoreBatch::new(vec![0.0, 1.0], vec![vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(ScoreBatch::new(vec![0.0], vec![vec![]]).is_err());
    }

    fn flatten(s: &ScoreBatch) -> Vec<f64> {
        let mut v = s.joint.clone();
        v.extend(s.negatives.iter().flatten());
        v
    }

    fn unflatten(v: &[f64], b: usize, k: usize) -> ScoreBatch {
        ScoreBatch {
            joint: v[..b].to_vec(),
            negatives: v[b..].chunks(k).map(|c| c.to_vec()).collect(),
        }
    }

    #[test]
    fn score_gradients_match_finite_differences() {
        let (b, k) = (3, 4);
        let pt: Vec<f64> = (0..b + b * k).map(|i| ((i * 37) % 17) as f64 / 5.0 - 1.5).collect();
        let s = unflatten(&pt, b, k);
        for kind in [BoundKind::MineDv, BoundKind::Cpc] {
            let (_, g) = bound_grad(kind, &s, None);
            let ana = flatten(&ScoreBatch {
                joint: g.joint,
                negatives: g.negatives,
            });
            let f = |v: &[f64]| bound_grad(kind, &unflatten(v, b, k), None).0.value_nats;
            let err = max_relative_error(f, &ana, &pt, 1e-5);
            assert!(err < 1e-8, "{kind:?}: {err}");
        }
    }

    #[test]
    fn ema_changes_gradient_not_value() {
        let s = ScoreBatch::new(vec![1.0, 0.5], vec![vec![0.2, -0.1], vec![0.3, 0.0]]).unwrap();
        let mut ema = DvEma {
            decay: 0.99,
            log_mean: Some(2.0),
        };
        let (plain, g0) = dv_bound_grad(&s, None);
        let (with, g1) = dv_bound_grad(&s, Some(&mut ema));
        assert_eq!(plain.value_nats, with.value_nats);
        assert_ne!(g0.negatives, g1.negatives);
        assert!(ema.log_mean.unwrap() < 2.0);
    }

    proptest! {
        #[test]
        fn normalized_infonce_never_exceeds_cap(
            rows in prop::collection::vec((-30.0f64..30.0, prop::collection::vec(-30.0f64..30.0, 5)), 1..6)
        ) {
            let joint: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let negs: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
            let est = infonce_bound(&joint, &negs, true).unwrap();
            prop_assert!(est.value_nats <= 6f64.ln() + 1e-12);
        }

        #[test]
        fn bounds_invariant_to_negative_order(
            joint in prop::collection::vec(-5.0f64..5.0, 3),
            negs in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 4), 3),
            shift in 0usize..4,
        ) {
            let rotated: Vec<Vec<f64>> = negs.iter().map(|r| {
                let mut r = r.clone();
                r.rotate_left(shift);
                r.reverse();
                r
            }).collect();
            let a = ScoreBatch::new(joint.clone(), negs).unwrap();
            let b = ScoreBatch::new(joint, rotated).unwrap();
            prop_assert!((dv_bound(&a).value_nats - dv_bound(&b).value_nats).abs() < 1e-12);
            let ia = infonce_bound_grad(&a, true).0.value_nats;
            let ib = infonce_bound_grad(&b, true).0.value_nats;
            prop_assert!((ia - ib).abs() < 1e-12);
        }
    }
}
