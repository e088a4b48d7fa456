//! Local one-way-max objective.
//!
//! Every sentence of a report is scored by the critic against every cell of
//! the paired image's feature grid. Each sentence keeps only its best cell,
//! and the MI bound is assembled from those winning scores (positives) and
//! from the winning cell paired with the same-position sentence of shuffled
//! reports (negatives). Cells can be picked by any number of sentences,
//! including none.

pub mod objective;

use crate::encoders::{FeatureGrid, SentencePack};
use crate::error::{Error, Result};
use crate::estimators::{bound_grad, BoundKind, Critic, CriticParams, DvEma, MIEstimate, ScoreBatch};

pub use objective::{global_objective, local_objective, Encoders, ModelGrads, ModelParams, ObjectiveKind, ObjectiveOutput, PairBatch};

/// Critic scores of every (cell, sentence) combination of one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalScoreMap {
    n_cells: usize,
    n_sentences: usize,
    scores: Vec<f64>,
}

impl LocalScoreMap {
    pub fn new(n_cells: usize, n_sentences: usize, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != n_cells * n_sentences {
            return Err(Error::InvalidInput(format!(
                "{n_cells}x{n_sentences} map needs {} scores, got {}",
                n_cells * n_sentences,
                scores.len()
            )));
        }
        Ok(Self {
            n_cells,
            n_sentences,
            scores,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn n_sentences(&self) -> usize {
        self.n_sentences
    }

    pub fn get(&self, cell: usize, sentence: usize) -> f64 {
        self.scores[cell * self.n_sentences + sentence]
    }

    pub fn column(&self, sentence: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_cells).map(move |n| self.get(n, sentence))
    }
}

/// Winning cell and its score, per sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSelection {
    pub cell: Vec<usize>,
    pub score: Vec<f64>,
}

pub fn local_scores(
    grid: &FeatureGrid,
    sentences: &SentencePack,
    critic: &Critic,
    params: &CriticParams,
) -> Result<LocalScoreMap> {
    check_widths(grid, sentences, critic)?;
    let pi: Vec<Vec<f64>> = grid.cells().map(|c| critic.project_image(params, c)).collect();
    let pt: Vec<Vec<f64>> = sentences
        .features
        .iter()
        .map(|t| critic.project_text(params, t))
        .collect();
    Ok(score_map(critic, params, &pi, &pt))
}

fn check_widths(grid: &FeatureGrid, sentences: &SentencePack, critic: &Critic) -> Result<()> {
    if grid.channels != critic.image_dim() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: critic.image_dim(),
            got: grid.channels,
        });
    }
    if sentences.is_empty() {
        return Err(Error::InvalidInput("report without sentences".into()));
    }
    if let Some(bad) = sentences.features.iter().find(|f| f.len() != critic.text_dim()) {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: critic.text_dim(),
            got: bad.len(),
        });
    }
    Ok(())
}

fn score_map(critic: &Critic, params: &CriticParams, pi: &[Vec<f64>], pt: &[Vec<f64>]) -> LocalScoreMap {
    let mut scores = Vec::with_capacity(pi.len() * pt.len());
    for cell in pi {
        for sent in pt {
            scores.push(critic.score_projected(params, cell, sent));
        }
    }
    LocalScoreMap {
        n_cells: pi.len(),
        n_sentences: pt.len(),
        scores,
    }
}

/// Per-sentence argmax over cells; ties go to the lowest row-major index.
pub fn select_regions(map: &LocalScoreMap) -> RegionSelection {
    let mut cell = Vec::with_capacity(map.n_sentences);
    let mut score = Vec::with_capacity(map.n_sentences);
    for m in 0..map.n_sentences {
        let (mut best, mut best_s) = (0, map.get(0, m));
        for n in 1..map.n_cells {
            let s = map.get(n, m);
            if s > best_s {
                best = n;
                best_s = s;
            }
        }
        cell.push(best);
        score.push(best_s);
    }
    RegionSelection { cell, score }
}

/// One positive term of the local objective: sentence `sentence` of pair
/// `pair`, matched to grid cell `cell`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Unit {
    pub pair: usize,
    pub sentence: usize,
    pub cell: usize,
}

/// Scores of the local objective before the bound is applied.
#[derive(Debug, Clone)]
pub struct LocalBatch {
    pub maps: Vec<LocalScoreMap>,
    pub selections: Vec<RegionSelection>,
    pub units: Vec<Unit>,
    /// `partners[u][k] = (pair, sentence)` scored against unit `u`'s cell.
    pub partners: Vec<Vec<(usize, usize)>>,
    pub scores: ScoreBatch,
    pi: Vec<Vec<Vec<f64>>>,
    pt: Vec<Vec<Vec<f64>>>,
}

/// Scores all cells against all sentences, selects regions and scores the
/// selected cells against the shuffled partners in `negatives`.
pub fn build_local_batch(
    grids: &[FeatureGrid],
    packs: &[SentencePack],
    critic: &Critic,
    params: &CriticParams,
    negatives: &[Vec<usize>],
) -> Result<LocalBatch> {
    let b = grids.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    if packs.len() != b || negatives.len() != b {
        return Err(Error::InvalidInput(format!(
            "{} grids, {} reports and {} negative rows",
            b,
            packs.len(),
            negatives.len()
        )));
    }
    for (g, p) in grids.iter().zip(packs) {
        check_widths(g, p, critic)?;
    }
    let pi: Vec<Vec<Vec<f64>>> = grids
        .iter()
        .map(|g| g.cells().map(|c| critic.project_image(params, c)).collect())
        .collect();
    let pt: Vec<Vec<Vec<f64>>> = packs
        .iter()
        .map(|p| p.features.iter().map(|t| critic.project_text(params, t)).collect())
        .collect();
    let maps: Vec<LocalScoreMap> = pi
        .iter()
        .zip(&pt)
        .map(|(i, t)| score_map(critic, params, i, t))
        .collect();
    let selections: Vec<RegionSelection> = maps.iter().map(select_regions).collect();

    let mut units = Vec::new();
    let mut partners = Vec::new();
    let mut joint = Vec::new();
    let mut negs = Vec::new();
    for (j, sel) in selections.iter().enumerate() {
        for (m, (&cell, &s)) in sel.cell.iter().zip(&sel.score).enumerate() {
            units.push(Unit {
                pair: j,
                sentence: m,
                cell,
            });
            joint.push(s);
            let row: Vec<(usize, usize)> = negatives[j]
                .iter()
                .map(|&p| (p, m % packs[p].len()))
                .collect();
            negs.push(
                row.iter()
                    .map(|&(p, mm)| critic.score_projected(params, &pi[j][cell], &pt[p][mm]))
                    .collect(),
            );
            partners.push(row);
        }
    }
    let scores = ScoreBatch::new(joint, negs)?;
    Ok(LocalBatch {
        maps,
        selections,
        units,
        partners,
        scores,
        pi,
        pt,
    })
}

/// Value and gradients of a bound evaluated on features.
#[derive(Debug, Clone)]
pub struct FeatureObjective {
    /// Objective being maximized: per-unit bound times units per pair.
    pub value: f64,
    /// The bound itself, per positive unit.
    pub estimate: MIEstimate,
    /// Per pair, gradient with respect to the image feature (grid data for
    /// the local objective, global vector for the global one).
    pub d_image: Vec<Vec<f64>>,
    /// Per pair and sentence, gradient with respect to the text feature.
    pub d_text: Vec<Vec<Vec<f64>>>,
    pub d_critic: CriticParams,
    pub selections: Vec<RegionSelection>,
}

fn add_into(acc: &mut Option<Vec<f64>>, d: &[f64]) {
    match acc {
        Some(a) => {
            for (x, y) in a.iter_mut().zip(d) {
                *x += y;
            }
        }
        None => *acc = Some(d.to_vec()),
    }
}

/// Local objective on already-encoded features.
///
/// The bound is computed once over all `(pair, sentence)` units of the batch
/// and scaled by units-per-pair, i.e. the per-pair sum over sentences of the
/// one-way-max terms. Only the selected cells receive gradient.
pub fn local_bound_features(
    grids: &[FeatureGrid],
    packs: &[SentencePack],
    critic: &Critic,
    params: &CriticParams,
    bound: BoundKind,
    negatives: &[Vec<usize>],
    ema: Option<&mut DvEma>,
) -> Result<FeatureObjective> {
    let batch = build_local_batch(grids, packs, critic, params, negatives)?;
    let b = grids.len();
    let scale = batch.units.len() as f64 / b as f64;
    let (estimate, g) = bound_grad(bound, &batch.scores, ema);

    let mut d_critic = params.zeros_like();
    let mut d_pi: Vec<Vec<Option<Vec<f64>>>> = batch.pi.iter().map(|c| vec![None; c.len()]).collect();
    let mut d_pt: Vec<Vec<Option<Vec<f64>>>> = batch.pt.iter().map(|s| vec![None; s.len()]).collect();
    for (u, unit) in batch.units.iter().enumerate() {
        let pi = &batch.pi[unit.pair][unit.cell];
        let gj = g.joint[u] * scale;
        if gj != 0.0 {
            let pt = &batch.pt[unit.pair][unit.sentence];
            let dz = critic.backward_projected(params, pi, pt, gj, &mut d_critic)?;
            add_into(&mut d_pi[unit.pair][unit.cell], &dz);
            add_into(&mut d_pt[unit.pair][unit.sentence], &dz);
        }
        for (&(p, m), &gn) in batch.partners[u].iter().zip(&g.negatives[u]) {
            let gn = gn * scale;
            if gn == 0.0 {
                continue;
            }
            let dz = critic.backward_projected(params, pi, &batch.pt[p][m], gn, &mut d_critic)?;
            add_into(&mut d_pi[unit.pair][unit.cell], &dz);
            add_into(&mut d_pt[p][m], &dz);
        }
    }

    let mut d_image = Vec::with_capacity(b);
    for (grid, cells) in grids.iter().zip(&d_pi) {
        let mut d = vec![0.0; grid.data.len()];
        for (n, dz) in cells.iter().enumerate() {
            if let Some(dz) = dz {
                let dc = critic.backward_image(params, grid.cell(n), dz, &mut d_critic);
                d[n * grid.channels..(n + 1) * grid.channels].copy_from_slice(&dc);
            }
        }
        d_image.push(d);
    }
    let mut d_text = Vec::with_capacity(b);
    for (pack, sents) in packs.iter().zip(&d_pt) {
        d_text.push(
            pack.features
                .iter()
                .zip(sents)
                .map(|(f, dz)| match dz {
                    Some(dz) => critic.backward_text(params, f, dz, &mut d_critic),
                    None => vec![0.0; f.len()],
                })
                .collect(),
        );
    }
    Ok(FeatureObjective {
        value: estimate.value_nats * scale,
        estimate,
        d_image,
        d_text,
        d_critic,
        selections: batch.selections,
    })
}

/// Global objective on one image vector and one text vector per pair.
/// Each feature is projected through the critic's first layer once and
/// shared by every pair it appears in.
pub fn global_bound_features(
    image_feats: &[Vec<f64>],
    text_feats: &[Vec<f64>],
    critic: &Critic,
    params: &CriticParams,
    bound: BoundKind,
    negatives: &[Vec<usize>],
    ema: Option<&mut DvEma>,
) -> Result<FeatureObjective> {
    let b = image_feats.len();
    if b < 2 {
        return Err(Error::BatchTooSmall(b));
    }
    if text_feats.len() != b || negatives.len() != b {
        return Err(Error::InvalidInput("global objective inputs disagree on batch size".into()));
    }
    if image_feats.iter().any(|f| f.len() != critic.image_dim()) || text_feats.iter().any(|f| f.len() != critic.text_dim())
    {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: critic.image_dim() + critic.text_dim(),
            got: image_feats[0].len() + text_feats[0].len(),
        });
    }
    let pi: Vec<Vec<f64>> = image_feats.iter().map(|f| critic.project_image(params, f)).collect();
    let pt: Vec<Vec<f64>> = text_feats.iter().map(|f| critic.project_text(params, f)).collect();
    let joint: Vec<f64> = (0..b).map(|j| critic.score_projected(params, &pi[j], &pt[j])).collect();
    let negs: Vec<Vec<f64>> = (0..b)
        .map(|j| negatives[j].iter().map(|&p| critic.score_projected(params, &pi[j], &pt[p])).collect())
        .collect();
    let scores = ScoreBatch::new(joint, negs)?;
    let (estimate, g) = bound_grad(bound, &scores, ema);

    let mut d_critic = params.zeros_like();
    let mut d_pi: Vec<Option<Vec<f64>>> = vec![None; b];
    let mut d_pt: Vec<Option<Vec<f64>>> = vec![None; b];
    for j in 0..b {
        let terms = std::iter::once((j, g.joint[j])).chain(negatives[j].iter().copied().zip(g.negatives[j].iter().copied()));
        for (t, up) in terms {
            if up == 0.0 {
                continue;
            }
            let dz = critic.backward_projected(params, &pi[j], &pt[t], up, &mut d_critic)?;
            add_into(&mut d_pi[j], &dz);
            add_into(&mut d_pt[t], &dz);
        }
    }
    let d_image = image_feats
        .iter()
        .zip(&d_pi)
        .map(|(f, dz)| match dz {
            Some(dz) => critic.backward_image(params, f, dz, &mut d_critic),
            None => vec![0.0; f.len()],
        })
        .collect();
    let d_text = text_feats
        .iter()
        .zip(&d_pt)
        .map(|(f, dz)| match dz {
            Some(dz) => vec![critic.backward_text(params, f, dz, &mut d_critic)],
            None => vec![vec![0.0; f.len()]],
        })
        .collect();
    Ok(FeatureObjective {
        value: estimate.value_nats,
        estimate,
        d_image,
        d_text,
        d_critic,
        selections: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{critic_score, shuffle_negatives};
    use crate::numeric::Activation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(rng: &mut ChaCha8Rng, side: usize, d: usize) -> FeatureGrid {
        FeatureGrid::new(side, d, (0..side * side * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_pack(rng: &mut ChaCha8Rng, n: usize, d: usize) -> SentencePack {
        SentencePack {
            features: (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        }
    }

    #[test]
    fn degenerate_map_is_single_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let critic = Critic::new(3, 2, &[4], Activation::Relu).unwrap();
        let p = critic.init(&mut rng);
        let g = random_grid(&mut rng, 1, 3);
        let s = random_pack(&mut rng, 1, 2);
        let map = local_scores(&g, &s, &critic, &p).unwrap();
        assert_eq!((map.n_cells(), map.n_sentences()), (1, 1));
        let direct = critic_score(&critic, &p, g.cell(0), &s.features[0]).unwrap();
        assert!((map.get(0, 0) - direct).abs() < 1e-13);
    }

    #[test]
    fn zero_critic_zero_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let critic = Critic::new(3, 2, &[4], Activation::Relu).unwrap();
        let map = local_scores(&random_grid(&mut rng, 2, 3), &random_pack(&mut rng, 3, 2), &critic, &critic.zeros()).unwrap();
        assert!(map.scores.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn full_map_spot_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let critic = Critic::new(4, 3, &[6, 3], Activation::Tanh).unwrap();
        let p = critic.init(&mut rng);
        let g = random_grid(&mut rng, 4, 4);
        let s = random_pack(&mut rng, 3, 3);
        let map = local_scores(&g, &s, &critic, &p).unwrap();
        assert_eq!((map.n_cells(), map.n_sentences()), (16, 3));
        for _ in 0..3 {
            let n = rng.random_range(0..16);
            let m = rng.random_range(0..3);
            let direct = critic_score(&critic, &p, g.cell(n), &s.features[m]).unwrap();
            assert!((map.get(n, m) - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn selection_argmax_and_ties() {
        let map = LocalScoreMap::new(3, 1, vec![1.0, 3.0, 2.0]).unwrap();
        let sel = select_regions(&map);
        assert_eq!(sel.cell, vec![1]);
        assert_eq!(sel.score, vec![3.0]);
        let tie = LocalScoreMap::new(4, 1, vec![0.5; 4]).unwrap();
        assert_eq!(select_regions(&tie).cell, vec![0]);
        let single = LocalScoreMap::new(1, 3, vec![-1.0, 0.0, 1.0]).unwrap();
        assert_eq!(select_regions(&single).cell, vec![0, 0, 0]);
    }

    #[test]
    fn one_positive_per_sentence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let critic = Critic::new(3, 2, &[5], Activation::Relu).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..4).map(|_| random_grid(&mut rng, 3, 3)).collect();
        let packs: Vec<_> = (0..4).map(|i| random_pack(&mut rng, 1 + i, 2)).collect();
        let neg = shuffle_negatives(4, 3, &mut rng).unwrap();
        let batch = build_local_batch(&grids, &packs, &critic, &p, &neg).unwrap();
        assert_eq!(batch.units.len(), 1 + 2 + 3 + 4);
        for (j, sel) in batch.selections.iter().enumerate() {
            assert_eq!(sel.cell.len(), packs[j].len());
            assert!(sel.cell.iter().all(|&c| c < 9));
            for (m, (&c, &s)) in sel.cell.iter().zip(&sel.score).enumerate() {
                assert_eq!(s, batch.maps[j].get(c, m));
            }
        }
    }

    #[test]
    fn non_selected_cells_get_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let critic = Critic::new(3, 2, &[5], Activation::Tanh).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..3).map(|_| random_grid(&mut rng, 3, 3)).collect();
        let packs: Vec<_> = (0..3).map(|_| random_pack(&mut rng, 2, 2)).collect();
        let neg = shuffle_negatives(3, 2, &mut rng).unwrap();
        for bound in [BoundKind::MineDv, BoundKind::Cpc] {
            let out = local_bound_features(&grids, &packs, &critic, &p, bound, &neg, None).unwrap();
            for (j, sel) in out.selections.iter().enumerate() {
                for n in 0..9 {
                    let cell_grad = &out.d_image[j][n * 3..(n + 1) * 3];
                    if !sel.cell.contains(&n) {
                        assert!(cell_grad.iter().all(|&v| v == 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn objective_invariant_to_cell_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let critic = Critic::new(3, 2, &[5], Activation::Relu).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..4).map(|_| random_grid(&mut rng, 2, 3)).collect();
        let packs: Vec<_> = (0..4).map(|_| random_pack(&mut rng, 2, 2)).collect();
        let neg = shuffle_negatives(4, 3, &mut rng).unwrap();
        let perm = [3, 1, 0, 2];
        let shuffled: Vec<_> = grids.iter().map(|g| g.permuted(&perm)).collect();
        for bound in [BoundKind::MineDv, BoundKind::Cpc] {
            let a = local_bound_features(&grids, &packs, &critic, &p, bound, &neg, None).unwrap();
            let b = local_bound_features(&shuffled, &packs, &critic, &p, bound, &neg, None).unwrap();
            assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn max_aggregation_dominates_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let critic = Critic::new(3, 2, &[5], Activation::Tanh).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..5).map(|_| random_grid(&mut rng, 3, 3)).collect();
        let packs: Vec<_> = (0..5).map(|_| random_pack(&mut rng, 3, 2)).collect();
        let neg = shuffle_negatives(5, 4, &mut rng).unwrap();
        let batch = build_local_batch(&grids, &packs, &critic, &p, &neg).unwrap();
        let mut mean_scores = batch.scores.clone();
        for (u, unit) in batch.units.iter().enumerate() {
            let col: Vec<f64> = batch.maps[unit.pair].column(unit.sentence).collect();
            mean_scores.joint[u] = col.iter().sum::<f64>() / col.len() as f64;
        }
        for bound in [BoundKind::MineDv, BoundKind::Cpc] {
            let max_v = bound_grad(bound, &batch.scores, None).0.value_nats;
            let mean_v = bound_grad(bound, &mean_scores, None).0.value_nats;
            assert!(max_v >= mean_v);
        }
    }

    #[test]
    fn batch_of_one_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let critic = Critic::new(3, 2, &[5], Activation::Tanh).unwrap();
        let p = critic.init(&mut rng);
        let r = local_bound_features(
            &[random_grid(&mut rng, 2, 3)],
            &[random_pack(&mut rng, 1, 2)],
            &critic,
            &p,
            BoundKind::Cpc,
            &[vec![0]],
            None,
        );
        assert!(matches!(r, Err(Error::BatchTooSmall(1))));
    }
    #[test]
    fn single_cell_single_sentence_matches_global() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let critic = Critic::new(4, 3, &[6, 4], Activation::Relu).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..6).map(|_| random_grid(&mut rng, 1, 4)).collect();
        let packs: Vec<_> = (0..6).map(|_| random_pack(&mut rng, 1, 3)).collect();
        let img: Vec<Vec<f64>> = grids.iter().map(|g| g.data.clone()).collect();
        let txt: Vec<Vec<f64>> = packs.iter().map(|s| s.features[0].clone()).collect();
        for (bound, k) in [(BoundKind::MineDv, 1), (BoundKind::Cpc, 5)] {
            let neg = shuffle_negatives(6, k, &mut rng).unwrap();
            let l = local_bound_features(&grids, &packs, &critic, &p, bound, &neg, None).unwrap();
            let g = global_bound_features(&img, &txt, &critic, &p, bound, &neg, None).unwrap();
            assert!((l.value - g.value).abs() < 1e-12);
            for (a, b) in l.d_critic.values().iter().zip(g.d_critic.values()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn local_value(
        grids: &[FeatureGrid],
        packs: &[SentencePack],
        critic: &Critic,
        p: &CriticParams,
        bound: BoundKind,
        neg: &[Vec<usize>],
    ) -> f64 {
        local_bound_features(grids, packs, critic, p, bound, neg, None).unwrap().value
    }

    #[test]
    fn feature_gradients_match_finite_differences() {
        use crate::numeric::max_relative_error;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let critic = Critic::new(3, 2, &[5], Activation::Tanh).unwrap();
        let p = critic.init(&mut rng);
        let grids: Vec<_> = (0..3).map(|_| random_grid(&mut rng, 2, 3)).collect();
        let packs: Vec<_> = (0..3).map(|i| random_pack(&mut rng, 1 + i, 2)).collect();
        let neg = shuffle_negatives(3, 2, &mut rng).unwrap();
        for bound in [BoundKind::MineDv, BoundKind::Cpc] {
            let out = local_bound_features(&grids, &packs, &critic, &p, bound, &neg, None).unwrap();

            let err = max_relative_error(
                |x| {
                    let q = ParamVectorExt::with_values(&p, x);
                    local_value(&grids, &packs, &critic, &q, bound, &neg)
                },
                out.d_critic.values(),
                p.values(),
                1e-5,
            );
            assert!(err < 1e-6, "critic {err}");

            for j in 0..3 {
                let err = max_relative_error(
                    |x| {
                        let mut gs = grids.clone();
                        gs[j].data = x.to_vec();
                        local_value(&gs, &packs, &critic, &p, bound, &neg)
                    },
                    &out.d_image[j],
                    &grids[j].data,
                    1e-5,
                );
                assert!(err < 1e-6, "grid {j}: {err}");
                for m in 0..packs[j].len() {
                    let err = max_relative_error(
                        |x| {
                            let mut ps = packs.clone();
                            ps[j].features[m] = x.to_vec();
                            local_value(&grids, &ps, &critic, &p, bound, &neg)
                        },
                        &out.d_text[j][m],
                        &packs[j].features[m],
                        1e-5,
                    );
                    assert!(err < 1e-6, "text {j},{m}: {err}");
                }
            }
        }
    }

    trait ParamVectorExt {
        fn with_values(&self, x: &[f64]) -> Self;
    }

    impl ParamVectorExt for CriticParams {
        fn with_values(&self, x: &[f64]) -> Self {
            let mut q = self.clone();
            q.values_mut().copy_from_slice(x);
            q
        }
    }
}
