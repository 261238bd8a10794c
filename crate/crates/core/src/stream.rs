//! Counter-based deterministic random streams.
//!
//! Every draw is a pure function of its key tuple, so the value consumed by
//! sample 17 at evaluation 312 does not depend on how many other samples ran
//! before it or on which worker thread ran them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
fn finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes an ordered key tuple to 64 well-mixed bits.
pub fn mix(keys: &[u64]) -> u64 {
    let mut h = finalize(GOLDEN ^ keys.len() as u64);
    for &k in keys {
        h = finalize(h.wrapping_add(GOLDEN) ^ finalize(k.wrapping_add(GOLDEN)));
    }
    h
}

/// Uniform index in `0..n` from the key tuple.
#[inline]
pub fn uniform_index(keys: &[u64], n: usize) -> usize {
    debug_assert!(n > 0);
    ((mix(keys) as u128 * n as u128) >> 64) as usize
}

/// Seed of sample `index` within a run seeded by `seed`.
#[inline]
pub fn sample_seed(seed: u64, index: u64) -> u64 {
    mix(&[seed, index])
}

/// Draws a standard-normal vector of length `dim` from a stream keyed by `seed`.
pub fn standard_normal(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x05EE_D0F0_A05E]));
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Sequential normal draws, for oracle code that needs many of them.
pub fn normal_stream(seed: u64) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(&[seed, 0x0AC1E]));
    std::iter::repeat_with(move || StandardNormal.sample(&mut rng))
}
