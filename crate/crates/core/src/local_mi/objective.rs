use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{global_bound_features, local_bound_features, FeatureObjective, RegionSelection};
use crate::encoders::{ImageEncoder, ImageSample, ReportSample, TextEncoder};
use crate::error::{Error, Result};
use crate::estimators::{shuffle_negatives, BoundKind, Critic, DvEma, MIEstimate};
use crate::numeric::{Activation, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Local,
    Global,
}

impl ObjectiveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectiveKind::Local => "local",
            ObjectiveKind::Global => "global",
        }
    }
}

/// The two encoders plus the critic shape for each pathway.
#[derive(Debug, Clone)]
pub struct Encoders {
    pub image: ImageEncoder,
    pub text: TextEncoder,
    pub local_critic: Critic,
    pub global_critic: Critic,
}

impl Encoders {
    pub fn new(image: ImageEncoder, text: TextEncoder, critic_hidden: &[usize], act: Activation) -> Result<Self> {
        let t = text.feature_dim();
        let local_critic = Critic::new(image.grid_channels(), t, critic_hidden, act)?;
        let global_critic = Critic::new(image.global_dim(), t, critic_hidden, act)?;
        Ok(Self {
            image,
            text,
            local_critic,
            global_critic,
        })
    }

    pub fn critic(&self, kind: ObjectiveKind) -> &Critic {
        match kind {
            ObjectiveKind::Local => &self.local_critic,
            ObjectiveKind::Global => &self.global_critic,
        }
    }

    pub fn init<R: Rng + ?Sized>(&self, kind: ObjectiveKind, rng: &mut R) -> ModelParams {
        ModelParams {
            image: self.image.init(rng),
            text: self.text.init(rng),
            critic: self.critic(kind).init(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub image: ParamVector,
    pub text: ParamVector,
    pub critic: ParamVector,
}

pub type ModelGrads = ModelParams;

impl ModelParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            image: self.image.zeros_like(),
            text: self.text.zeros_like(),
            critic: self.critic.zeros_like(),
        }
    }

    pub fn norm(&self) -> f64 {
        (self.image.norm().powi(2) + self.text.norm().powi(2) + self.critic.norm().powi(2)).sqrt()
    }
}

/// A minibatch of matched image/report pairs.
#[derive(Debug, Clone)]
pub struct PairBatch<'a> {
    pub images: Vec<&'a ImageSample>,
    pub reports: Vec<&'a ReportSample>,
}

impl<'a> PairBatch<'a> {
    pub fn new(images: Vec<&'a ImageSample>, reports: Vec<&'a ReportSample>) -> Result<Self> {
        if images.len() != reports.len() {
            return Err(Error::InvalidInput(format!(
                "{} images but {} reports",
                images.len(),
                reports.len()
            )));
        }
        if images.len() < 2 {
            return Err(Error::BatchTooSmall(images.len()));
        }
        Ok(Self { images, reports })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ObjectiveOutput {
    pub value: f64,
    pub estimate: MIEstimate,
    /// Gradient of `value` (ascent direction).
    pub grads: ModelGrads,
    pub selections: Vec<RegionSelection>,
}

/// Local objective with freshly shuffled negatives.
pub fn local_objective<R: Rng + ?Sized>(
    batch: &PairBatch<'_>,
    encoders: &Encoders,
    params: &ModelParams,
    bound: BoundKind,
    k: usize,
    rng: &mut R,
    ema: Option<&mut DvEma>,
) -> Result<ObjectiveOutput> {
    let negatives = shuffle_negatives(batch.len(), k, rng)?;
    local_objective_with(batch, encoders, params, bound, &negatives, ema)
}

/// Global objective with freshly shuffled negatives.
pub fn global_objective<R: Rng + ?Sized>(
    batch: &PairBatch<'_>,
    encoders: &Encoders,
    params: &ModelParams,
    bound: BoundKind,
    k: usize,
    rng: &mut R,
    ema: Option<&mut DvEma>,
) -> Result<ObjectiveOutput> {
    let negatives = shuffle_negatives(batch.len(), k, rng)?;
    global_objective_with(batch, encoders, params, bound, &negatives, ema)
}

pub fn objective_with(
    kind: ObjectiveKind,
    batch: &PairBatch<'_>,
    encoders: &Encoders,
    params: &ModelParams,
    bound: BoundKind,
    negatives: &[Vec<usize>],
    ema: Option<&mut DvEma>,
) -> Result<ObjectiveOutput> {
    match kind {
        ObjectiveKind::Local => local_objective_with(batch, encoders, params, bound, negatives, ema),
        ObjectiveKind::Global => global_objective_with(batch, encoders, params, bound, negatives, ema),
    }
}

pub fn local_objective_with(
    batch: &PairBatch<'_>,
    encoders: &Encoders,
    params: &ModelParams,
    bound: BoundKind,
    negatives: &[Vec<usize>],
    ema: Option<&mut DvEma>,
) -> Result<ObjectiveOutput> {
    let mut grids = Vec::with_capacity(batch.len());
    let mut img_caches = Vec::with_capacity(batch.len());
    for img in &batch.images {
        let (g, c) = encoders.image.forward_local(&params.image, img)?;
        grids.push(g);
        img_caches.push(c);
    }
    let mut packs = Vec::with_capacity(batch.len());
    let mut txt_caches = Vec::with_capacity(batch.len());
    for rep in &batch.reports {
        let (p, c) = encoders.text.forward(&params.text, rep)?;
        packs.push(p);
        txt_caches.push(c);
    }
    let feat = local_bound_features(
        &grids,
        &packs,
        &encoders.local_critic,
        &params.critic,
        bound,
        negatives,
        ema,
    )?;
    let FeatureObjective {
        value,
        estimate,
        d_image,
        d_text,
        d_critic,
        selections,
    } = feat;
    let mut grads = params.zeros_like();
    grads.critic = d_critic;
    for (cache, d) in img_caches.iter().zip(&d_image) {
        encoders.image.backward_local(&params.image, cache, d, &mut grads.image);
    }
    for (cache, d) in txt_caches.iter().zip(&d_text) {
        encoders.text.backward(&params.text, cache, d, &mut grads.text)?;
    }
    finish(value, estimate, grads, selections)
}

pub fn global_objective_with(
    batch: &PairBatch<'_>,
    encoders: &Encoders,
    params: &ModelParams,
    bound: BoundKind,
    negatives: &[Vec<usize>],
    ema: Option<&mut DvEma>,
) -> Result<ObjectiveOutput> {
    let mut img_feats = Vec::with_capacity(batch.len());
    let mut caches = Vec::with_capacity(batch.len());
    for img in &batch.images {
        let (grid, lc) = encoders.image.forward_local(&params.image, img)?;
        let (gf, gc) = encoders.image.forward_global(&params.image, &grid)?;
        img_feats.push(gf.vector);
        caches.push((lc, gc));
    }
    let mut txt_feats = Vec::with_capacity(batch.len());
    let mut txt_caches = Vec::with_capacity(batch.len());
    for rep in &batch.reports {
        let (p, c) = encoders.text.forward(&params.text, rep)?;
        txt_feats.push(p.mean());
        txt_caches.push((p.len(), c));
    }
    let feat = global_bound_features(
        &img_feats,
        &txt_feats,
        &encoders.global_critic,
        &params.critic,
        bound,
        negatives,
        ema,
    )?;
    let mut grads = params.zeros_like();
    grads.critic = feat.d_critic;
    for ((lc, gc), d) in caches.iter().zip(&feat.d_image) {
        let d_grid = encoders.image.backward_global(&params.image, gc, d, &mut grads.image);
        encoders.image.backward_local(&params.image, lc, &d_grid, &mut grads.image);
    }
    for ((n, cache), d) in txt_caches.iter().zip(&feat.d_text) {
        let per_sentence: Vec<f64> = d[0].iter().map(|v| v / *n as f64).collect();
        let d_sent = vec![per_sentence; *n];
        encoders.text.backward(&params.text, cache, &d_sent, &mut grads.text)?;
    }
    finish(feat.value, feat.estimate, grads, Vec::new())
}

/// Smallest distance of any encoder relu pre-activation from its kink on
/// this batch. Gradient checks are only meaningful when it is well above the
/// finite-difference step.
pub fn relu_margin(batch: &PairBatch<'_>, encoders: &Encoders, params: &ModelParams) -> Result<f64> {
    let mut m = f64::INFINITY;
    for img in &batch.images {
        let (grid, lc) = encoders.image.forward_local(&params.image, img)?;
        let (_, gc) = encoders.image.forward_global(&params.image, &grid)?;
        m = m.min(lc.relu_margin()).min(gc.relu_margin());
    }
    for rep in &batch.reports {
        m = m.min(encoders.text.forward(&params.text, rep)?.1.relu_margin());
    }
    Ok(m)
}

fn finish(
    value: f64,
    estimate: MIEstimate,
    grads: ModelGrads,
    selections: Vec<RegionSelection>,
) -> Result<ObjectiveOutput> {
    if !value.is_finite() {
        return Err(Error::NonFiniteObjective);
    }
    Ok(ObjectiveOutput {
        value,
        estimate,
        grads,
        selections,
    })
}
