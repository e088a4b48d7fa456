use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::mlp::{backward_slice, forward_slice};
use crate::numeric::{glorot_fill, Activation, MlpCache, MlpSpec, ParamVector};

pub type TextEncoderParams = ParamVector;

/// Report as an ordered list of sentences of token ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportSample {
    pub sentences: Vec<Vec<u16>>,
}

/// One feature vector per sentence, in report order.
#[derive(Debug, Clone, PartialEq)]
pub struct SentencePack {
    pub features: Vec<Vec<f64>>,
}

impl SentencePack {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Report-level feature: mean over sentence features.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.features.len() as f64;
        let mut out = vec![0.0; self.features[0].len()];
        for f in &self.features {
            for (o, v) in out.iter_mut().zip(f) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= n;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextEncoderSpec {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
}

impl Default for TextEncoderSpec {
    fn default() -> Self {
        Self {
            vocab_size: 64,
            embed_dim: 16,
            hidden_dim: 32,
            feature_dim: 32,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextCache {
    sentences: Vec<Vec<u16>>,
    mlp: Vec<MlpCache>,
}

impl TextCache {
    /// Smallest `|z|` over the hidden relu pre-activations of all sentences.
    pub fn relu_margin(&self) -> f64 {
        self.mlp
            .iter()
            .flat_map(|c| c.pre[..c.pre.len() - 1].iter().flatten())
            .fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

/// Bag-of-tokens sentence encoder: mean token embedding through a two-layer
/// MLP.
#[derive(Debug, Clone)]
pub struct TextEncoder {
    spec: TextEncoderSpec,
    mlp: MlpSpec,
    embed_len: usize,
}

impl TextEncoder {
    pub fn new(spec: TextEncoderSpec) -> Result<Self> {
        if spec.vocab_size == 0 || spec.embed_dim == 0 {
            return Err(Error::InvalidConfig("text encoder widths must be positive".into()));
        }
        let mlp = MlpSpec::uniform(
            vec![spec.embed_dim, spec.hidden_dim, spec.feature_dim],
            Activation::Relu,
        )?;
        Ok(Self {
            embed_len: spec.vocab_size * spec.embed_dim,
            spec,
            mlp,
        })
    }

    pub fn spec(&self) -> &TextEncoderSpec {
        &self.spec
    }

    pub fn feature_dim(&self) -> usize {
        self.spec.feature_dim
    }

    pub fn zeros(&self) -> TextEncoderParams {
        let mut layout = vec![(
            "embed".to_string(),
            vec![self.spec.vocab_size, self.spec.embed_dim],
        )];
        layout.extend(self.mlp.layout("mlp."));
        ParamVector::zeros(&layout).expect("generated layout is valid")
    }

    /// Embeddings uniform in `±sqrt(6 / (1 + embed_dim))`, MLP Glorot.
    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R) -> TextEncoderParams {
        let mut p = self.zeros();
        let v = p.values_mut();
        glorot_fill(&mut v[..self.embed_len], 1, self.spec.embed_dim, rng);
        self.mlp.init_slice(&mut v[self.embed_len..], rng);
        p
    }

    fn mean_embedding(&self, params: &ParamVector, sentence: &[u16]) -> Result<Vec<f64>> {
        if sentence.is_empty() {
            return Err(Error::InvalidInput("empty sentence".into()));
        }
        let e = self.spec.embed_dim;
        let table = &params.values()[..self.embed_len];
        let mut mean = vec![0.0; e];
        for &t in sentence {
            let t = t as usize;
            if t >= self.spec.vocab_size {
                return Err(Error::UnknownToken {
                    token: t,
                    vocab: self.spec.vocab_size,
                });
            }
            for (m, x) in mean.iter_mut().zip(&table[t * e..(t + 1) * e]) {
                *m += x;
            }
        }
        let n = sentence.len() as f64;
        for m in &mut mean {
            *m /= n;
        }
        Ok(mean)
    }

    pub fn forward(
        &self,
        params: &ParamVector,
        report: &ReportSample,
    ) -> Result<(SentencePack, TextCache)> {
        if params.len() != self.embed_len + self.mlp.param_count() {
            return Err(Error::Layout("text encoder parameters do not match spec".into()));
        }
        if report.sentences.is_empty() {
            return Err(Error::InvalidInput("report has no sentences".into()));
        }
        let mlp_params = &params.values()[self.embed_len..];
        let mut features = Vec::with_capacity(report.sentences.len());
        let mut caches = Vec::with_capacity(report.sentences.len());
        for s in &report.sentences {
            let mean = self.mean_embedding(params, s)?;
            let cache = forward_slice(&self.mlp, mlp_params, &mean)?;
            features.push(cache.output().to_vec());
            caches.push(cache);
        }
        Ok((
            SentencePack { features },
            TextCache {
                sentences: report.sentences.clone(),
                mlp: caches,
            },
        ))
    }

    pub fn encode_sentences(
        &self,
        params: &ParamVector,
        report: &ReportSample,
    ) -> Result<SentencePack> {
        Ok(self.forward(params, report)?.0)
    }

    /// Accumulates gradients given one upstream vector per sentence.
    pub fn backward(
        &self,
        params: &ParamVector,
        cache: &TextCache,
        d_features: &[Vec<f64>],
        grad: &mut ParamVector,
    ) -> Result<()> {
        let e = self.spec.embed_dim;
        let (embed_grad, mlp_grad) = grad.values_mut().split_at_mut(self.embed_len);
        let mlp_params = &params.values()[self.embed_len..];
        for ((sentence, mc), d) in cache.sentences.iter().zip(&cache.mlp).zip(d_features) {
            if d.iter().all(|&x| x == 0.0) {
                continue;
            }
            let d_mean = backward_slice(&self.mlp, mlp_params, mc, d, mlp_grad)?;
            let n = sentence.len() as f64;
            for &t in sentence {
                let row = &mut embed_grad[t as usize * e..(t as usize + 1) * e];
                for (g, dm) in row.iter_mut().zip(&d_mean) {
                    *g += dm / n;
                }
            }
        }
        Ok(())
    }
}
