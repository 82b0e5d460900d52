//! Seed derivation. Every stochastic component draws from a `ChaCha8Rng`
//! whose seed is mixed from the master seed and a path of integer tags, so
//! independent streams never overlap and runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a seed with a sequence of tags into a new seed.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn rng_from(seed: u64, tags: &[u64]) -> Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tags))
}

// Stream tags.
pub(crate) const TAG_INIT: u64 = 1;
pub(crate) const TAG_ROLLOUT: u64 = 2;
pub(crate) const TAG_DISC: u64 = 3;
pub(crate) const TAG_GEN: u64 = 4;
pub(crate) const TAG_EVAL: u64 = 5;
pub(crate) const TAG_RANDOM_BASELINE: u64 = 6;
pub(crate) const TAG_NEGATIVES: u64 = 7;
pub(crate) const TAG_BC: u64 = 8;
pub(crate) const TAG_DEMO: u64 = 9;
