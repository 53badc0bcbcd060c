//! Seed derivation for independent, order-free random streams.
//!
//! Every consumer (a tree, a fold, a replication, a SOM run) derives its own
//! generator from the root seed and a path of integers, so results never
//! depend on execution order or thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep streams for different purposes apart.
pub(crate) mod tag {
    pub const TREE: u64 = 1;
    pub const SHADOW: u64 = 2;
    pub const REPLICATION: u64 = 3;
    pub const FOLD_SPLIT: u64 = 4;
    pub const FOLD: u64 = 5;
    pub const SOM: u64 = 6;
    pub const FOREST: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of stream indices.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}
