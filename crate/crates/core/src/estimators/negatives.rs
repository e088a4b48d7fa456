use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};

/// For each row `b` of a batch of size `batch`, `k` partner indices drawn
/// uniformly from the batch with `b` excluded. Partners within a row are
/// distinct when `k < batch`; larger `k` samples with replacement.
pub fn shuffle_negatives<R: Rng + ?Sized>(batch: usize, k: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch < 2 {
        return Err(Error::BatchTooSmall(batch));
    }
    if k == 0 {
        return Err(Error::InvalidInput("need at least one negative per row".into()));
    }
    let others = batch - 1;
    let skip_self = |b: usize, i: usize| if i >= b { i + 1 } else { i };
    Ok((0..batch)
        .map(|b| {
            if k <= others {
                index::sample(rng, others, k)
                    .into_iter()
                    .map(|i| skip_self(b, i))
                    .collect()
            } else {
                (0..k).map(|_| skip_self(b, rng.random_range(0..others))).collect()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    #[test]
    fn two_rows_are_forced() {
        let m = shuffle_negatives(2, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m, vec![vec![1], vec![0]]);
    }

    #[test]
    fn never_pairs_with_self() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (b, k) in [(3, 2), (8, 7), (5, 12), (64, 63)] {
            let m = shuffle_negatives(b, k, &mut rng).unwrap();
            for (row, partners) in m.iter().enumerate() {
                assert_eq!(partners.len(), k);
                assert!(partners.iter().all(|&p| p != row && p < b));
            }
        }
    }

    #[test]
    fn small_batch_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(shuffle_negatives(1, 1, &mut rng), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn partner_marginal_is_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (b, row) = (6, 2);
        let mut counts = vec![0usize; b];
        let draws = 100_000;
        for _ in 0..draws {
            let m = shuffle_negatives(b, 1, &mut rng).unwrap();
            counts[m[row][0]] += 1;
        }
        assert_eq!(counts[row], 0);
        let expected = draws as f64 / (b - 1) as f64;
        let chi2: f64 = counts
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != row)
            .map(|(_, &c)| (c as f64 - expected).powi(2) / expected)
            .sum();
        let p = 1.0 - ChiSquared::new((b - 2) as f64).unwrap().cdf(chi2);
        assert!(p > 0.01, "chi2 {chi2}, p {p}");
    }
}
