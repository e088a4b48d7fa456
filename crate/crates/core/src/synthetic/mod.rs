//! Synthetic paired data with known information content.
//!
//! A [`GenerativeWorld`] is a finite categorical model: every region `n` of
//! an image carries a hidden state `H_n`; the region's patch symbol depends
//! on `H_n` and an image-wide nuisance `V^I`, and the matching sentence's
//! symbol depends on `H_n` and a report-wide nuisance `V^R`. All tables are
//! small enough that mutual information can be computed by enumeration.

pub mod gaussian;
pub mod io;
pub mod oracle;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoders::{ImageSample, ReportSample};
use crate::error::{Error, Result};
use crate::rng::indexed_stream;

pub use gaussian::{gaussian_mi, gaussian_pairs, GaussianPairConfig, GaussianPairs};
pub use oracle::{conditional_mi, dv_exact, log_ratio_critic, plugin_mi, true_mi_discrete};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_regions: usize,
    pub hidden_cardinality: usize,
    pub image_noise_levels: usize,
    pub text_noise_levels: usize,
    /// 0: emissions independent of the hidden state; 1: deterministic.
    pub signal_strength: f64,
    pub image_size: usize,
    pub tile_size: usize,
    /// Pixel amplitude of the patch patterns around mid-grey.
    pub pattern_contrast: f64,
    /// Standard deviation of per-pixel Gaussian noise.
    pub pixel_noise: f64,
    pub filler_tokens: usize,
    pub vocab_size: usize,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_regions: 4,
            hidden_cardinality: 3,
            image_noise_levels: 2,
            text_noise_levels: 2,
            signal_strength: 0.5,
            image_size: 32,
            tile_size: 8,
            pattern_contrast: 0.6,
            pixel_noise: 0.25,
            filler_tokens: 2,
            vocab_size: 64,
        }
    }
}

impl WorldConfig {
    pub fn patch_symbols(&self) -> usize {
        self.hidden_cardinality * self.image_noise_levels
    }

    pub fn sentence_symbols(&self) -> usize {
        self.hidden_cardinality * self.text_noise_levels
    }

    fn first_filler_token(&self) -> usize {
        self.n_regions * (1 + self.sentence_symbols())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_regions == 0 {
            return bad("n_regions must be at least 1".into());
        }
        if self.hidden_cardinality == 0 || self.image_noise_levels == 0 || self.text_noise_levels == 0 {
            return bad("cardinalities must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return bad(format!("signal_strength {} outside [0, 1]", self.signal_strength));
        }
        if self.tile_size == 0 || self.image_size % self.tile_size != 0 {
            return bad(format!(
                "image_size {} is not a multiple of tile_size {}",
                self.image_size, self.tile_size
            ));
        }
        let slots = (self.image_size / self.tile_size).div_ceil(2).pow(2);
        if self.n_regions > slots {
            return bad(format!("{} regions do not fit in {} separated tiles", self.n_regions, slots));
        }
        if !(self.pixel_noise >= 0.0) || !(self.pattern_contrast >= 0.0) {
            return bad("pixel_noise and pattern_contrast must be non-negative".into());
        }
        let needed = self.first_filler_token() + usize::from(self.filler_tokens > 0);
        if needed > self.vocab_size || self.vocab_size > usize::from(u16::MAX) {
            return bad(format!("vocab_size {} too small; need at least {needed}", self.vocab_size));
        }
        Ok(())
    }

    /// Top-left pixel of region `n`'s tile. Regions sit on every other tile
    /// so that no two share a tile row or column neighbourhood.
    pub fn tile_origin(&self, n: usize) -> (usize, usize) {
        let per_row = (self.image_size / self.tile_size).div_ceil(2);
        let (r, c) = (n / per_row, n % per_row);
        (2 * r * self.tile_size, 2 * c * self.tile_size)
    }

    /// Grid cell (row-major, one cell per tile) covering region `n`.
    pub fn region_cell(&self, n: usize) -> usize {
        let (y, x) = self.tile_origin(n);
        (y / self.tile_size) * (self.image_size / self.tile_size) + x / self.tile_size
    }
}

/// A sampled instance of the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerativeWorld {
    config: WorldConfig,
    hidden_prior: Vec<f64>,
    /// `region_to_sentence[n]` is the sentence index of region `n`.
    region_to_sentence: Vec<usize>,
    /// `[region][h * |V^I| + v][symbol]`.
    patch_emission: Vec<Vec<Vec<f64>>>,
    /// `[region][h * |V^R| + v][symbol]`.
    sentence_emission: Vec<Vec<Vec<f64>>>,
    /// `[region][symbol][tile pixel]`.
    patch_codebook: Vec<Vec<Vec<f64>>>,
}

fn dirichlet_ones<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let s: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / s).collect()
}

/// Row `h * v_levels + v` puts mass `s` on symbol `h * v_levels + v` and
/// spreads `1 - s` according to `base`.
fn emission_table(s: f64, base: &[f64]) -> Vec<Vec<f64>> {
    (0..base.len())
        .map(|row| {
            base.iter()
                .enumerate()
                .map(|(sym, &q)| (1.0 - s) * q + if sym == row { s } else { 0.0 })
                .collect()
        })
        .collect()
}

pub fn sample_world<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> Result<GenerativeWorld> {
    config.validate()?;
    let r = config.n_regions;
    let mut region_to_sentence: Vec<usize> = (0..r).collect();
    region_to_sentence.shuffle(rng);
    let patch_emission = (0..r)
        .map(|_| emission_table(config.signal_strength, &dirichlet_ones(config.patch_symbols(), rng)))
        .collect();
    let sentence_emission = (0..r)
        .map(|_| emission_table(config.signal_strength, &dirichlet_ones(config.sentence_symbols(), rng)))
        .collect();
    let t2 = config.tile_size * config.tile_size;
    let (lo, hi) = (0.5 - config.pattern_contrast / 2.0, 0.5 + config.pattern_contrast / 2.0);
    let patch_codebook = (0..r)
        .map(|_| {
            (0..config.patch_symbols())
                .map(|_| (0..t2).map(|_| if rng.random::<bool>() { hi } else { lo }).collect())
                .collect()
        })
        .collect();
    Ok(GenerativeWorld {
        config: config.clone(),
        hidden_prior: vec![1.0 / config.hidden_cardinality as f64; config.hidden_cardinality],
        region_to_sentence,
        patch_emission,
        sentence_emission,
        patch_codebook,
    })
}

/// One draw from the world.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSample {
    pub hiddens: Vec<u8>,
    pub image_noise: u8,
    pub text_noise: u8,
    pub patch_symbols: Vec<u16>,
    pub sentence_symbols: Vec<u16>,
    pub image: ImageSample,
    pub report: ReportSample,
    /// `1` iff `H_n > 0`.
    pub labels: Vec<u8>,
}

fn categorical<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

fn quantize(x: f64) -> f64 {
    (x.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

impl GenerativeWorld {
    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn region_to_sentence(&self) -> &[usize] {
        &self.region_to_sentence
    }

    pub fn hidden_prior(&self) -> &[f64] {
        &self.hidden_prior
    }

    pub fn patch_emission(&self, region: usize) -> &[Vec<f64>] {
        &self.patch_emission[region]
    }

    pub fn sentence_emission(&self, region: usize) -> &[Vec<f64>] {
        &self.sentence_emission[region]
    }

    pub fn patch_pattern(&self, region: usize, symbol: usize) -> &[f64] {
        &self.patch_codebook[region][symbol]
    }

    pub fn region_token(&self, region: usize) -> u16 {
        region as u16
    }

    pub fn symbol_token(&self, region: usize, symbol: usize) -> u16 {
        (self.config.n_regions + region * self.config.sentence_symbols() + symbol) as u16
    }

    /// SHA-256 over the configuration and every table, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let c = &self.config;
        for v in [
            c.n_regions,
            c.hidden_cardinality,
            c.image_noise_levels,
            c.text_noise_levels,
            c.image_size,
            c.tile_size,
            c.filler_tokens,
            c.vocab_size,
        ] {
            h.update((v as u64).to_le_bytes());
        }
        for v in [c.signal_strength, c.pattern_contrast, c.pixel_noise] {
            h.update(v.to_le_bytes());
        }
        for &m in &self.region_to_sentence {
            h.update((m as u64).to_le_bytes());
        }
        let tables = self
            .patch_emission
            .iter()
            .chain(&self.sentence_emission)
            .chain(&self.patch_codebook)
            .flatten()
            .flatten()
            .chain(&self.hidden_prior);
        for x in tables {
            h.update(x.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldSample {
        let c = &self.config;
        let hiddens: Vec<u8> = (0..c.n_regions)
            .map(|_| categorical(&self.hidden_prior, rng) as u8)
            .collect();
        let vi = rng.random_range(0..c.image_noise_levels);
        let vr = rng.random_range(0..c.text_noise_levels);
        let patch_symbols: Vec<u16> = hiddens
            .iter()
            .enumerate()
            .map(|(n, &h)| categorical(&self.patch_emission[n][h as usize * c.image_noise_levels + vi], rng) as u16)
            .collect();
        let sentence_symbols: Vec<u16> = hiddens
            .iter()
            .enumerate()
            .map(|(n, &h)| categorical(&self.sentence_emission[n][h as usize * c.text_noise_levels + vr], rng) as u16)
            .collect();

        let noise = Normal::new(0.0, c.pixel_noise).expect("validated noise level");
        let mut image = ImageSample::zeros(c.image_size, c.image_size);
        for px in &mut image.pixels {
            *px = 0.5;
        }
        for (n, &sym) in patch_symbols.iter().enumerate() {
            let (y0, x0) = c.tile_origin(n);
            let pattern = &self.patch_codebook[n][sym as usize];
            for dy in 0..c.tile_size {
                for dx in 0..c.tile_size {
                    image.set(y0 + dy, x0 + dx, pattern[dy * c.tile_size + dx]);
                }
            }
        }
        for px in &mut image.pixels {
            *px = quantize(*px + noise.sample(rng));
        }

        let first_filler = c.first_filler_token();
        let mut sentences = vec![Vec::new(); c.n_regions];
        for (n, &sym) in sentence_symbols.iter().enumerate() {
            let mut tokens = vec![self.region_token(n), self.symbol_token(n, sym as usize)];
            for _ in 0..c.filler_tokens {
                tokens.push(rng.random_range(first_filler..c.vocab_size) as u16);
            }
            sentences[self.region_to_sentence[n]] = tokens;
        }
        let labels = hiddens.iter().map(|&h| u8::from(h > 0)).collect();
        WorldSample {
            hiddens,
            image_noise: vi as u8,
            text_noise: vr as u8,
            patch_symbols,
            sentence_symbols,
            image,
            report: ReportSample { sentences },
            labels,
        }
    }

    /// Joint table `p[h][patch symbol]` for region `n`.
    pub fn patch_hidden_table(&self, n: usize) -> Vec<Vec<f64>> {
        hidden_symbol_table(&self.hidden_prior, &self.patch_emission[n], self.config.image_noise_levels)
    }

    /// Joint table `p[h][sentence symbol]` for region `n`.
    pub fn sentence_hidden_table(&self, n: usize) -> Vec<Vec<f64>> {
        hidden_symbol_table(&self.hidden_prior, &self.sentence_emission[n], self.config.text_noise_levels)
    }

    /// Joint table `p[patch symbol][sentence symbol]` for region `n`; the two
    /// are dependent only through `H_n`.
    pub fn patch_sentence_table(&self, n: usize) -> Vec<Vec<f64>> {
        let ph = self.patch_hidden_table(n);
        let sh = self.sentence_hidden_table(n);
        let mut t = vec![vec![0.0; self.config.sentence_symbols()]; self.config.patch_symbols()];
        for h in 0..self.config.hidden_cardinality {
            let p_h = self.hidden_prior[h];
            for (a, row) in t.iter_mut().enumerate() {
                for (b, x) in row.iter_mut().enumerate() {
                    *x += ph[h][a] * sh[h][b] / p_h;
                }
            }
        }
        t
    }

    pub fn region_truth(&self, n: usize) -> Result<RegionTruth> {
        Ok(RegionTruth {
            region: n,
            sentence: self.region_to_sentence[n],
            mi_patch_hidden: true_mi_discrete(&self.patch_hidden_table(n))?,
            mi_sentence_hidden: true_mi_discrete(&self.sentence_hidden_table(n))?,
            mi_patch_sentence: true_mi_discrete(&self.patch_sentence_table(n))?,
        })
    }

    pub fn ground_truth(&self) -> Result<Vec<RegionTruth>> {
        (0..self.config.n_regions).map(|n| self.region_truth(n)).collect()
    }

    /// Exact chain-rule decomposition for region `n` using raw patch symbols:
    /// `z_n` is region `n`'s symbol, `z̄_n` the tuple of all other regions'
    /// symbols.
    pub fn chain_rule_check(&self, n: usize) -> Result<ChainRuleReport> {
        let c = &self.config;
        let s = c.patch_symbols();
        let rest = c.n_regions - 1;
        let n_rest = s.checked_pow(rest as u32).unwrap_or(usize::MAX);
        let states = n_rest.saturating_mul(s).saturating_mul(c.hidden_cardinality);
        if states > MAX_STATES {
            return Err(Error::StateSpaceTooLarge(states));
        }
        let others: Vec<usize> = (0..c.n_regions).filter(|&m| m != n).collect();
        let vl = c.image_noise_levels;
        let p_v = 1.0 / vl as f64;
        // p(z | v) for every other region, hidden state marginalized.
        let marg: Vec<Vec<Vec<f64>>> = others
            .iter()
            .map(|&m| {
                (0..vl)
                    .map(|v| {
                        (0..s)
                            .map(|z| {
                                (0..c.hidden_cardinality)
                                    .map(|h| self.hidden_prior[h] * self.patch_emission[m][h * vl + v][z])
                                    .sum()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        // table[z_n][zbar][h]
        let mut table = vec![vec![vec![0.0; c.hidden_cardinality]; n_rest]; s];
        for v in 0..vl {
            let mut p_rest = vec![1.0; n_rest];
            for (idx, p) in p_rest.iter_mut().enumerate() {
                let mut k = idx;
                for m in marg.iter() {
                    *p *= m[v][k % s];
                    k /= s;
                }
            }
            for h in 0..c.hidden_cardinality {
                let ph = p_v * self.hidden_prior[h];
                for (z, plane) in table.iter_mut().enumerate() {
                    let pz = ph * self.patch_emission[n][h * vl + v][z];
                    if pz == 0.0 {
                        continue;
                    }
                    for (row, &pr) in plane.iter_mut().zip(&p_rest) {
                        row[h] += pz * pr;
                    }
                }
            }
        }
        let full: Vec<Vec<f64>> = table.iter().flatten().cloned().collect();
        let local: Vec<Vec<f64>> = table
            .iter()
            .map(|plane| {
                (0..c.hidden_cardinality)
                    .map(|h| plane.iter().map(|r| r[h]).sum())
                    .collect()
            })
            .collect();
        let joint_mi = true_mi_discrete(&full)?;
        let local_mi = true_mi_discrete(&local)?;
        let cond = conditional_mi(&table)?;
        Ok(ChainRuleReport {
            region: n,
            joint_mi,
            local_mi,
            conditional_mi: cond,
            residual: (joint_mi - local_mi - cond).abs(),
            slack: joint_mi - local_mi,
        })
    }

    pub fn generate_dataset<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<WorldSample> {
        let base: u64 = rng.random();
        (0..n as u64)
            .map(|i| self.sample(&mut indexed_stream(base, "sample", i)))
            .collect()
    }
}

/// Largest joint state space the chain-rule check will enumerate.
pub const MAX_STATES: usize = 1 << 21;

fn hidden_symbol_table(prior: &[f64], emission: &[Vec<f64>], v_levels: usize) -> Vec<Vec<f64>> {
    prior
        .iter()
        .enumerate()
        .map(|(h, &ph)| {
            let mut row = vec![0.0; emission[0].len()];
            for v in 0..v_levels {
                for (x, e) in row.iter_mut().zip(&emission[h * v_levels + v]) {
                    *x += ph * e / v_levels as f64;
                }
            }
            row
        })
        .collect()
}

/// Exact information content of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionTruth {
    pub region: usize,
    pub sentence: usize,
    pub mi_patch_hidden: f64,
    pub mi_sentence_hidden: f64,
    pub mi_patch_sentence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainRuleReport {
    pub region: usize,
    /// `I((z_n, z̄_n); H_n)`.
    pub joint_mi: f64,
    /// `I(z_n; H_n)`.
    pub local_mi: f64,
    /// `I(z̄_n; H_n | z_n)`.
    pub conditional_mi: f64,
    pub residual: f64,
    pub slack: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn world(cfg: WorldConfig, seed: u64) -> GenerativeWorld {
        sample_world(&cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn emission_rows_are_stochastic() {
        let w = world(WorldConfig::default(), 0);
        for n in 0..4 {
            for row in w.patch_emission(n).iter().chain(w.sentence_emission(n)) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let mut m = w.region_to_sentence().to_vec();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_signal_means_no_information() {
        let w = world(
            WorldConfig {
                signal_strength: 0.0,
                ..WorldConfig::default()
            },
            1,
        );
        for t in w.ground_truth().unwrap() {
            assert!(t.mi_patch_hidden.abs() < 1e-12);
            assert!(t.mi_sentence_hidden.abs() < 1e-12);
        }
    }

    #[test]
    fn full_signal_uniform_four_states_is_ln4() {
        let w = world(
            WorldConfig {
                signal_strength: 1.0,
                hidden_cardinality: 4,
                ..WorldConfig::default()
            },
            2,
        );
        for n in 0..4 {
            let mi = true_mi_discrete(&w.patch_hidden_table(n)).unwrap();
            assert!((mi - 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn full_signal_sample_is_recoverable() {
        let cfg = WorldConfig {
            signal_strength: 1.0,
            pixel_noise: 0.0,
            ..WorldConfig::default()
        };
        let w = world(cfg.clone(), 3);
        let s = w.sample(&mut ChaCha8Rng::seed_from_u64(9));
        for n in 0..4 {
            let h = s.hiddens[n] as usize;
            assert_eq!(s.patch_symbols[n] as usize, h * 2 + s.image_noise as usize);
            assert_eq!(s.sentence_symbols[n] as usize, h * 2 + s.text_noise as usize);
            let (y0, x0) = cfg.tile_origin(n);
            let pattern = w.patch_pattern(n, s.patch_symbols[n] as usize);
            assert!((s.image.get(y0 + 3, x0 + 5) - quantize(pattern[3 * 8 + 5])).abs() < 1e-15);
            let sent = &s.report.sentences[w.region_to_sentence()[n]];
            assert_eq!(sent[0], w.region_token(n));
            assert_eq!(sent[1], w.symbol_token(n, s.sentence_symbols[n] as usize));
            assert_eq!(s.labels[n], u8::from(h > 0));
        }
        assert_eq!(s.report.sentences.len(), 4);
        assert!(s.report.sentences.iter().flatten().all(|&t| (t as usize) < cfg.vocab_size));
    }

    #[test]
    fn hidden_frequencies_match_prior() {
        let w = world(WorldConfig::default(), 4);
        let data = w.generate_dataset(100_000, &mut ChaCha8Rng::seed_from_u64(5));
        for n in 0..4 {
            let mut counts = [0usize; 3];
            for s in &data {
                counts[s.hiddens[n] as usize] += 1;
            }
            let e = data.len() as f64 / 3.0;
            let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
            let p = 1.0 - ChiSquared::new(2.0).unwrap().cdf(chi2);
            assert!(p > 0.01, "region {n}: chi2 {chi2}");
        }
    }

    #[test]
    fn shuffled_reports_carry_no_information() {
        let w = world(WorldConfig::default(), 6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data = w.generate_dataset(100_000, &mut rng);
        let mut perm: Vec<usize> = (0..data.len()).collect();
        perm.shuffle(&mut rng);
        let (np, ns) = (w.config().patch_symbols(), w.config().sentence_symbols());
        for n in 0..4 {
            let a: Vec<usize> = data.iter().map(|s| s.patch_symbols[n] as usize).collect();
            let matched: Vec<usize> = data.iter().map(|s| s.sentence_symbols[n] as usize).collect();
            let shuffled: Vec<usize> = perm.iter().map(|&i| matched[i]).collect();
            assert!(plugin_mi(&a, &shuffled, np, ns).unwrap() < 0.02);
            let truth = w.region_truth(n).unwrap().mi_patch_sentence;
            assert!((plugin_mi(&a, &matched, np, ns).unwrap() - truth).abs() < 0.01);
        }
    }

    #[test]
    fn data_processing_inequality() {
        for seed in 0..10 {
            let w = world(WorldConfig::default(), 100 + seed);
            for t in w.ground_truth().unwrap() {
                assert!(t.mi_patch_sentence <= t.mi_sentence_hidden + 1e-12);
                assert!(t.mi_patch_sentence <= t.mi_patch_hidden + 1e-12);
            }
        }
    }

    #[test]
    fn chain_rule_default_world() {
        let w = world(WorldConfig::default(), 8);
        for n in 0..4 {
            let r = w.chain_rule_check(n).unwrap();
            assert!(r.residual < 1e-12, "{r:?}");
            assert!(r.slack >= -1e-12, "{r:?}");
        }
    }

    #[test]
    fn chain_rule_slack_vanishes_without_shared_nuisance() {
        // With a single image-noise level the other regions' symbols are
        // independent of H_n given z_n.
        let w = world(
            WorldConfig {
                image_noise_levels: 1,
                ..WorldConfig::default()
            },
            9,
        );
        for n in 0..4 {
            let r = w.chain_rule_check(n).unwrap();
            assert!(r.slack.abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn oversized_state_space_rejected() {
        let w = world(
            WorldConfig {
                n_regions: 9,
                image_size: 48,
                hidden_cardinality: 4,
                image_noise_levels: 3,
                vocab_size: 200,
                ..WorldConfig::default()
            },
            10,
        );
        assert!(matches!(w.chain_rule_check(0), Err(Error::StateSpaceTooLarge(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for cfg in [
            WorldConfig {
                hidden_cardinality: 0,
                ..WorldConfig::default()
            },
            WorldConfig {
                signal_strength: 1.5,
                ..WorldConfig::default()
            },
            WorldConfig {
                n_regions: 5,
                ..WorldConfig::default()
            },
            WorldConfig {
                vocab_size: 20,
                ..WorldConfig::default()
            },
        ] {
            assert!(sample_world(&cfg, &mut rng).is_err());
        }
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let a = world(WorldConfig::default(), 11);
        let b = world(WorldConfig::default(), 11);
        let c = world(WorldConfig::default(), 12);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
        assert_eq!(a.fingerprint().len(), 64);
    }

    #[test]
    fn region_cells_are_separated() {
        let c = WorldConfig::default();
        let cells: Vec<usize> = (0..4).map(|n| c.region_cell(n)).collect();
        assert_eq!(cells, vec![0, 2, 8, 10]);
    }
}
