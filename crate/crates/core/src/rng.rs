//! Seeding and stream splitting.
//!
//! Every random stream in the crate is a [`ChaCha8Rng`] seeded from a single
//! 64-bit value through `ChaCha8Rng::seed_from_u64`. Independent streams for
//! replicates, splits and EM jitter are derived with [`mix`], which folds a
//! list of words into the base seed using the SplitMix64 finalizer:
//!
//! ```text
//! h = splitmix64(base)
//! for w in words: h = splitmix64(h ^ (w * 0x9E3779B97F4A7C15))
//! ```
//!
//! Derived seeds depend only on (base, words), never on scheduling, so
//! parallel and serial runs see identical streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an ordered list of stream indices.
pub fn mix(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(base), |h, &w| {
        splitmix64(h ^ w.wrapping_mul(GOLDEN_GAMMA))
    })
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
