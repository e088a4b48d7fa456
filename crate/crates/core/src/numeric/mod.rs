//! Differentiable substrate: parameter containers, dense networks with
//! hand-written backward passes, finite-difference checks and Adam.

pub mod adam;
pub mod grad_check;
pub mod mlp;
pub mod params;

pub use adam::{adam_step, adam_step_except, AdamConfig, AdamState};
pub use grad_check::{grad_check, max_relative_error};
pub use mlp::{backward, mlp_forward, Activation, GradRecord, MlpCache, MlpSpec};
pub use params::{glorot_fill, ParamVector, Segment};

/// Numerically stable `log(sum(exp(x)))`; `-inf` for an empty slice.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
