use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::mlp::{backward_slice, forward_slice};
use crate::numeric::{mlp_forward, Activation, MlpSpec, ParamVector};

pub type CriticParams = ParamVector;

/// Concatenation critic `f([image ; text])`: an MLP with scalar output.
///
/// Besides the direct evaluation, the first layer can be split into an image
/// projection and a text projection (`W0 [a; t] = W0a a + W0t t`) so that a
/// feature shared by many pairs is projected once.
#[derive(Debug, Clone)]
pub struct Critic {
    spec: MlpSpec,
    rest: Option<MlpSpec>,
    image_dim: usize,
    text_dim: usize,
}

impl Critic {
    pub fn new(image_dim: usize, text_dim: usize, hidden: &[usize], act: Activation) -> Result<Self> {
        let mut widths = vec![image_dim + text_dim];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let spec = MlpSpec::uniform(widths.clone(), act)?;
        let rest = if hidden.is_empty() {
            None
        } else {
            Some(MlpSpec::uniform(widths[1..].to_vec(), act)?)
        };
        Ok(Self {
            spec,
            rest,
            image_dim,
            text_dim,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn image_dim(&self) -> usize {
        self.image_dim
    }

    pub fn text_dim(&self) -> usize {
        self.text_dim
    }

    fn first_width(&self) -> usize {
        self.spec.widths()[1]
    }

    fn first_act(&self) -> Activation {
        if self.rest.is_some() {
            self.spec.activation(0)
        } else {
            Activation::Identity
        }
    }

    fn rest_offset(&self) -> usize {
        let h = self.first_width();
        (self.image_dim + self.text_dim) * h + h
    }

    pub fn zeros(&self) -> CriticParams {
        self.spec.zeros()
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> CriticParams {
        self.spec.init(rng)
    }

    fn check_widths(&self, image: &[f64], text: &[f64]) -> Result<()> {
        if image.len() != self.image_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.image_dim,
                got: image.len(),
            });
        }
        if text.len() != self.text_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.text_dim,
                got: text.len(),
            });
        }
        Ok(())
    }

    /// Reference evaluation on the concatenated input `[image ; text]`.
    pub fn score(&self, params: &CriticParams, image: &[f64], text: &[f64]) -> Result<f64> {
        self.check_widths(image, text)?;
        let mut x = Vec::with_capacity(self.image_dim + self.text_dim);
        x.extend_from_slice(image);
        x.extend_from_slice(text);
        Ok(mlp_forward(&self.spec, params, &x)?[0])
    }

    /// `W0[:, image] a + b0`.
    pub fn project_image(&self, params: &CriticParams, image: &[f64]) -> Vec<f64> {
        let n_in = self.image_dim + self.text_dim;
        let h = self.first_width();
        let v = params.values();
        let (w, b) = (&v[..n_in * h], &v[n_in * h..n_in * h + h]);
        (0..h)
            .map(|o| {
                let row = &w[o * n_in..o * n_in + self.image_dim];
                b[o] + row.iter().zip(image).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// `W0[:, text] t`.
    pub fn project_text(&self, params: &CriticParams, text: &[f64]) -> Vec<f64> {
        let n_in = self.image_dim + self.text_dim;
        let h = self.first_width();
        let w = &params.values()[..n_in * h];
        (0..h)
            .map(|o| {
                let row = &w[o * n_in + self.image_dim..(o + 1) * n_in];
                row.iter().zip(text).map(|(a, x)| a * x).sum::<f64>()
            })
            .collect()
    }

    /// Score from precomputed projections.
    pub fn score_projected(&self, params: &CriticParams, pi: &[f64], pt: &[f64]) -> f64 {
        let act = self.first_act();
        if let Some(rest) = self.rest.as_ref().filter(|r| r.n_layers() == 1) {
            // Single linear output layer: w . act(z) + b without buffers.
            let v = &params.values()[self.rest_offset()..];
            let n = rest.input_width();
            return v[n] + pi.iter().zip(pt).zip(&v[..n]).map(|((a, b), w)| w * act.apply(a + b)).sum::<f64>();
        }
        let h: Vec<f64> = pi.iter().zip(pt).map(|(a, b)| act.apply(a + b)).collect();
        match &self.rest {
            None => h[0],
            Some(rest) => {
                let cache = forward_slice(rest, &params.values()[self.rest_offset()..], &h)
                    .expect("widths fixed at construction");
                cache.output()[0]
            }
        }
    }

    /// Backward through everything above the first affine map. Accumulates
    /// the upper-layer gradients into `grad` and returns the gradient with
    /// respect to the first-layer pre-activation (shared by both
    /// projections).
    pub fn backward_projected(
        &self,
        params: &CriticParams,
        pi: &[f64],
        pt: &[f64],
        upstream: f64,
        grad: &mut CriticParams,
    ) -> Result<Vec<f64>> {
        let act = self.first_act();
        if let Some(rest) = self.rest.as_ref().filter(|r| r.n_layers() == 1) {
            let off = self.rest_offset();
            let n = rest.input_width();
            let w = &params.values()[off..off + n];
            let g = &mut grad.values_mut()[off..off + n + 1];
            g[n] += upstream;
            return Ok(pi
                .iter()
                .zip(pt)
                .zip(w)
                .enumerate()
                .map(|(i, ((a, b), w))| {
                    let z = a + b;
                    let h = act.apply(z);
                    g[i] += upstream * h;
                    upstream * w * act.derivative(z, h)
                })
                .collect());
        }
        let z: Vec<f64> = pi.iter().zip(pt).map(|(a, b)| a + b).collect();
        match &self.rest {
            None => Ok(vec![upstream]),
            Some(rest) => {
                let h: Vec<f64> = z.iter().map(|&v| act.apply(v)).collect();
                let off = self.rest_offset();
                let rest_params = &params.values()[off..];
                let cache = forward_slice(rest, rest_params, &h)?;
                let d_h = backward_slice(rest, rest_params, &cache, &[upstream], &mut grad.values_mut()[off..])?;
                Ok(d_h
                    .iter()
                    .zip(z.iter().zip(&h))
                    .map(|(d, (z, a))| d * act.derivative(*z, *a))
                    .collect())
            }
        }
    }

    /// Pushes an accumulated first-layer gradient `d_z` back to the image
    /// side: adds `d_z a^T` to the image block of `W0`, `d_z` to `b0`, and
    /// returns `W0[:, image]^T d_z`.
    pub fn backward_image(
        &self,
        params: &CriticParams,
        image: &[f64],
        d_z: &[f64],
        grad: &mut CriticParams,
    ) -> Vec<f64> {
        let n_in = self.image_dim + self.text_dim;
        let h = self.first_width();
        let w = &params.values()[..n_in * h];
        let g = grad.values_mut();
        let mut d_in = vec![0.0; self.image_dim];
        for (o, &d) in d_z.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            g[n_in * h + o] += d;
            let base = o * n_in;
            for i in 0..self.image_dim {
                g[base + i] += d * image[i];
                d_in[i] += d * w[base + i];
            }
        }
        d_in
    }

    /// Text-side counterpart of [`Critic::backward_image`] (no bias term).
    pub fn backward_text(
        &self,
        params: &CriticParams,
        text: &[f64],
        d_z: &[f64],
        grad: &mut CriticParams,
    ) -> Vec<f64> {
        let n_in = self.image_dim + self.text_dim;
        let h = self.first_width();
        let w = &params.values()[..n_in * h];
        let g = grad.values_mut();
        let mut d_in = vec![0.0; self.text_dim];
        for (o, &d) in d_z.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let base = o * n_in + self.image_dim;
            for i in 0..self.text_dim {
                g[base + i] += d * text[i];
                d_in[i] += d * w[base + i];
            }
        }
        d_in
    }
}

/// Scalar critic score of an (image feature, text feature) pair.
pub fn critic_score(
    critic: &Critic,
    params: &CriticParams,
    image_feat: &[f64],
    text_feat: &[f64],
) -> Result<f64> {
    critic.score(params, image_feat, text_feat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::backward;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_critic_scores_zero() {
        let c = Critic::new(3, 2, &[4, 2], Activation::Relu).unwrap();
        let p = c.zeros();
        assert_eq!(critic_score(&c, &p, &[1.0, 2.0, 3.0], &[4.0, 5.0]).unwrap(), 0.0);
    }

    #[test]
    fn argument_order_matters() {
        let c = Critic::new(2, 2, &[8], Activation::Tanh).unwrap();
        let p = c.init(&mut ChaCha8Rng::seed_from_u64(13));
        let a = [0.3, -1.2];
        let b = [0.9, 0.4];
        let ab = critic_score(&c, &p, &a, &b).unwrap();
        let ba = critic_score(&c, &p, &b, &a).unwrap();
        assert!((ab - ba).abs() > 1e-6, "{ab} vs {ba}");
    }

    #[test]
    fn hand_set_single_hidden_unit() {
        // input [a1, t1], hidden relu(2 a1 - t1 + 0.5), out 3 h - 1
        let c = Critic::new(1, 1, &[1], Activation::Relu).unwrap();
        let mut p = c.zeros();
        p.segment_mut("w0").unwrap().copy_from_slice(&[2.0, -1.0]);
        p.segment_mut("b0").unwrap()[0] = 0.5;
        p.segment_mut("w1").unwrap()[0] = 3.0;
        p.segment_mut("b1").unwrap()[0] = -1.0;
        // a=1, t=0.5: h = 2 - 0.5 + 0.5 = 2 -> out 5
        assert_eq!(critic_score(&c, &p, &[1.0], &[0.5]).unwrap(), 5.0);
        // a=0, t=1: h = relu(-0.5) = 0 -> out -1
        assert_eq!(critic_score(&c, &p, &[0.0], &[1.0]).unwrap(), -1.0);
    }

    #[test]
    fn width_mismatch_is_error() {
        let c = Critic::new(2, 2, &[3], Activation::Relu).unwrap();
        assert!(c.score(&c.zeros(), &[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn projected_path_matches_concatenation() {
        let c = Critic::new(4, 3, &[6, 5], Activation::Tanh).unwrap();
        let p = c.init(&mut ChaCha8Rng::seed_from_u64(8));
        let a = [0.1, -0.4, 0.7, 1.0];
        let t = [0.5, 0.2, -0.9];
        let direct = c.score(&p, &a, &t).unwrap();
        let fast = c.score_projected(&p, &c.project_image(&p, &a), &c.project_text(&p, &t));
        assert!((direct - fast).abs() < 1e-13);
    }

    #[test]
    fn projected_backward_matches_full_backward() {
        let c = Critic::new(3, 2, &[5, 4], Activation::Tanh).unwrap();
        let p = c.init(&mut ChaCha8Rng::seed_from_u64(9));
        let a = [0.2, -0.3, 0.8];
        let t = [1.1, -0.6];
        let mut x = a.to_vec();
        x.extend_from_slice(&t);
        let full = backward(c.spec(), &p, &x, &[1.7]).unwrap();
        let mut grad = p.zeros_like();
        let (pi, pt) = (c.project_image(&p, &a), c.project_text(&p, &t));
        let dz = c.backward_projected(&p, &pi, &pt, 1.7, &mut grad).unwrap();
        let da = c.backward_image(&p, &a, &dz, &mut grad);
        let dt = c.backward_text(&p, &t, &dz, &mut grad);
        for (g, f) in grad.values().iter().zip(full.gradient.values()) {
            assert!((g - f).abs() < 1e-13);
        }
        for (g, f) in da.iter().chain(&dt).zip(&full.input) {
            assert!((g - f).abs() < 1e-13);
        }
    }
}
