//! Seed derivation.
//!
//! Every random draw in a run comes from a ChaCha stream whose seed is a
//! pure function of the master seed and a path of integers (epoch, part,
//! purpose, ...). Resuming from a checkpoint or running parts in a
//! different order therefore never shifts another stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags used by the training engine.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const STRUCTURAL: u64 = 2;
    pub const SAMPLE: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const EVAL: u64 = 5;
    pub const BASELINE: u64 = 6;
    pub const INFER: u64 = 7;
    pub const PARTITION: u64 = 8;
    pub const SPLIT: u64 = 9;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `path` into `seed`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

pub fn rng_from_seed(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
