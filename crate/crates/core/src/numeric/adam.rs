use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::params::ParamVector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate >= 0.0
            && self.learning_rate.is_finite()
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment estimates for one parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n: usize) -> Self {
        Self {
            config,
            first_moment: vec![0.0; n],
            second_moment: vec![0.0; n],
            step_count: 0,
        }
    }

    pub fn for_params(config: AdamConfig, params: &ParamVector) -> Self {
        Self::new(config, params.len())
    }
}

/// One bias-corrected Adam descent step on `params` along `-grads`.
pub fn adam_step(params: &mut ParamVector, grads: &[f64], state: &mut AdamState) {
    let all = 0..params.len();
    adam_step_ranges(params, grads, state, std::slice::from_ref(&all));
}

/// Adam step restricted to the given index ranges; every other coordinate
/// (and its moments) is left untouched.
pub fn adam_step_ranges(
    params: &mut ParamVector,
    grads: &[f64],
    state: &mut AdamState,
    ranges: &[Range<usize>],
) {
    assert_eq!(params.len(), grads.len(), "gradient shape");
    assert_eq!(params.len(), state.first_moment.len(), "optimizer state shape");
    state.step_count += 1;
    let c = state.config;
    let t = state.step_count as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    let values = params.values_mut();
    for r in ranges {
        for i in r.clone() {
            let g = grads[i];
            let m = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
            let v = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
            state.first_moment[i] = m;
            state.second_moment[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            values[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
}

/// Adam step that skips the named segments entirely.
pub fn adam_step_except(
    params: &mut ParamVector,
    grads: &[f64],
    state: &mut AdamState,
    frozen: &[String],
) {
    let ranges: Vec<Range<usize>> = params
        .segments()
        .iter()
        .filter(|s| !frozen.contains(&s.name))
        .map(|s| s.range())
        .collect();
    adam_step_ranges(params, grads, state, &ranges);
}
