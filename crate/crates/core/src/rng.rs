//! Seed derivation for independent, reproducible RNG streams.
//!
//! Every stochastic consumer (data order, policy init, rollouts, exploration
//! nets, evaluation) draws from its own ChaCha stream keyed by a derived seed,
//! so enabling or disabling one consumer never shifts another's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a path of indices.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(seed), |acc, &p| mix(acc ^ mix(p)))
}

pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// Named stream tags.
pub mod tag {
    pub const DATA: u64 = 0xDA7A;
    pub const POLICY_INIT: u64 = 0x1417;
    pub const SAMPLING: u64 = 0x5A3B;
    pub const EXPLORE: u64 = 0xE4B1;
    pub const EVAL: u64 = 0xE7A1;
    pub const WARM_START: u64 = 0x5F7A;
}
