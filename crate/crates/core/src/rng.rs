//! Seed derivation: every random stream is a ChaCha8 stream keyed by the
//! master seed and selected by a stable hash of its name.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// FNV-1a, 64-bit. Stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Named sub-stream of `master`, e.g. `stream(seed, "data")`.
pub fn stream(master: u64, name: &str) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Indexed sub-stream, for per-sample generation.
pub fn indexed_stream(master: u64, name: &str, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a: u64 = stream(1, "data").random();
        let b: u64 = stream(1, "data").random();
        let c: u64 = stream(1, "init").random();
        let d: u64 = indexed_stream(1, "data", 1).random();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
