//! Seed derivation.
//!
//! Every stochastic unit of work (a fold, a tree, an OvR member, a grid cell)
//! draws from its own generator seeded by mixing the master seed with the
//! unit's index, so results never depend on scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive the seed of sub-unit `unit` from `seed`.
pub fn mix_seed(seed: u64, unit: u64) -> u64 {
    splitmix64(seed ^ splitmix64(unit.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derive a seed from a path of unit indices.
pub fn mix_path(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(seed, |s, &u| mix_seed(s, u))
}

pub fn rng_from(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
