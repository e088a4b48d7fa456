//! Dense feed-forward networks with explicit per-layer backward passes.
//!
//! Weights are row-major `(out, in)`. A network's parameters are stored as
//! consecutive `w{l}`, `b{l}` segments so that the same routines can run on a
//! standalone [`ParamVector`] or on a slice of a larger encoder vector.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{glorot_fill, ParamVector};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Layer widths plus one activation per hidden layer; the output layer is
/// always linear.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    widths: Vec<usize>,
    hidden: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, hidden: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidConfig(
                "an MLP needs at least an input and an output width".into(),
            ));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig("MLP widths must be positive".into()));
        }
        if hidden.len() != widths.len() - 2 {
            return Err(Error::InvalidConfig(format!(
                "{} hidden layers need {} activations, got {}",
                widths.len() - 2,
                widths.len() - 2,
                hidden.len()
            )));
        }
        Ok(Self { widths, hidden })
    }

    /// Same activation on every hidden layer.
    pub fn uniform(widths: Vec<usize>, act: Activation) -> Result<Self> {
        let n = widths.len().saturating_sub(2);
        Self::new(widths, vec![act; n])
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn activation(&self, layer: usize) -> Activation {
        self.hidden.get(layer).copied().unwrap_or(Activation::Identity)
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layout(&self, prefix: &str) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::with_capacity(2 * self.n_layers());
        for (l, w) in self.widths.windows(2).enumerate() {
            out.push((format!("{prefix}w{l}"), vec![w[1], w[0]]));
            out.push((format!("{prefix}b{l}"), vec![w[1]]));
        }
        out
    }

    pub fn zeros(&self) -> ParamVector {
        ParamVector::zeros(&self.layout("")).expect("generated layout is valid")
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamVector {
        let mut p = self.zeros();
        self.init_slice(p.values_mut(), rng);
        p
    }

    pub fn init_slice<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let mut off = 0;
        for w in self.widths.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            glorot_fill(&mut params[off..off + fan_in * fan_out], fan_in, fan_out, rng);
            off += fan_in * fan_out;
            params[off..off + fan_out].fill(0.0);
            off += fan_out;
        }
    }

    pub fn check_params(&self, params: &ParamVector) -> Result<()> {
        let expected = ParamVector::zeros(&self.layout(""))?;
        if !params.same_layout(&expected) {
            return Err(Error::Layout(
                "parameter layout does not match the MLP spec".into(),
            ));
        }
        Ok(())
    }
}

/// Per-layer pre- and post-activation values from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }
}

#[inline]
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, (row, bias)) in out.iter_mut().zip(w.chunks_exact(n_in).zip(b)) {
        let mut s = *bias;
        for (wi, xi) in row.iter().zip(x) {
            s += wi * xi;
        }
        *o = s;
    }
}

/// Forward pass over a raw parameter slice laid out as `w0 b0 w1 b1 ...`.
pub fn forward_slice(spec: &MlpSpec, params: &[f64], input: &[f64]) -> Result<MlpCache> {
    if input.len() != spec.input_width() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: spec.input_width(),
            got: input.len(),
        });
    }
    if params.len() != spec.param_count() {
        return Err(Error::Layout(format!(
            "MLP expects {} parameters, got {}",
            spec.param_count(),
            params.len()
        )));
    }
    let mut acts = Vec::with_capacity(spec.n_layers() + 1);
    let mut pre = Vec::with_capacity(spec.n_layers());
    acts.push(input.to_vec());
    let mut off = 0;
    for (l, w) in spec.widths.windows(2).enumerate() {
        let (n_in, n_out) = (w[0], w[1]);
        let weights = &params[off..off + n_in * n_out];
        off += n_in * n_out;
        let bias = &params[off..off + n_out];
        off += n_out;
        let mut z = vec![0.0; n_out];
        affine(weights, bias, &acts[l], &mut z);
        let act = spec.activation(l);
        let a: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        pre.push(z);
        acts.push(a);
    }
    Ok(MlpCache { acts, pre })
}

/// Backward pass given a cached forward pass. Parameter gradients are
/// accumulated into `grad` (same layout as the parameters); returns the
/// gradient with respect to the input.
pub fn backward_slice(
    spec: &MlpSpec,
    params: &[f64],
    cache: &MlpCache,
    upstream: &[f64],
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    if upstream.len() != spec.output_width() {
        return Err(Error::DimensionMismatch {
            layer: spec.n_layers() - 1,
            expected: spec.output_width(),
            got: upstream.len(),
        });
    }
    // offsets of each layer's weights
    let mut offsets = Vec::with_capacity(spec.n_layers());
    let mut off = 0;
    for w in spec.widths.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    let mut delta = upstream.to_vec();
    for l in (0..spec.n_layers()).rev() {
        let (n_in, n_out) = (spec.widths[l], spec.widths[l + 1]);
        let act = spec.activation(l);
        for (d, (z, a)) in delta.iter_mut().zip(cache.pre[l].iter().zip(&cache.acts[l + 1])) {
            *d *= act.derivative(*z, *a);
        }
        let w_off = offsets[l];
        let b_off = w_off + n_in * n_out;
        let x = &cache.acts[l];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += d * xi;
            }
            grad[b_off + o] += d;
        }
        let weights = &params[w_off..w_off + n_in * n_out];
        let mut next = vec![0.0; n_in];
        for (o, &d) in delta.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            for (n, wi) in next.iter_mut().zip(&weights[o * n_in..(o + 1) * n_in]) {
                *n += d * wi;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { layer: l });
        }
        delta = next;
    }
    Ok(delta)
}

/// Evaluates the network on one input.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamVector, input: &[f64]) -> Result<Vec<f64>> {
    spec.check_params(params)?;
    let cache = forward_slice(spec, params.values(), input)?;
    Ok(cache.acts.last().unwrap().clone())
}

/// Gradient of `upstream · output` with respect to parameters and input.
#[derive(Debug, Clone)]
pub struct GradRecord {
    /// `upstream · output` at the evaluated point.
    pub loss: f64,
    pub gradient: ParamVector,
    pub input: Vec<f64>,
}

pub fn backward(
    spec: &MlpSpec,
    params: &ParamVector,
    input: &[f64],
    upstream: &[f64],
) -> Result<GradRecord> {
    spec.check_params(params)?;
    let cache = forward_slice(spec, params.values(), input)?;
    let mut gradient = params.zeros_like();
    let input_grad = backward_slice(spec, params.values(), &cache, upstream, gradient.values_mut())?;
    let loss = cache
        .output()
        .iter()
        .zip(upstream)
        .map(|(a, b)| a * b)
        .sum();
    Ok(GradRecord {
        loss,
        gradient,
        input: input_grad,
    })
}
