//! Deterministic sub-seed derivation.
//!
//! Every source of randomness in the crate is a ChaCha8 stream whose seed is
//! derived from a master seed and an index via SplitMix64. The derivation is
//! pure arithmetic on `u64`, so traces replay identically across platforms.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer. Scrambles a 64-bit state into a well-mixed output.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive the sub-seed for stream `index` of the generator family rooted at
/// `master`. Distinct indices give statistically independent streams.
pub fn derive(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master).wrapping_add(splitmix64(index)))
}

/// A ChaCha8 generator for the given seed.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
