//! The single random number generator used across the crate.
//!
//! Every stochastic component (weight init, data generation, splits,
//! shuffles, hyperparameter sampling) draws from a [`ChaCha8Rng`] seeded
//! through [`seeded`], so results never depend on the platform's default RNG.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng as DgRng;

pub fn seeded(seed: u64) -> DgRng {
    DgRng::seed_from_u64(seed)
}

/// Mixes a base seed with a stream tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable 64-bit FNV-1a hash, used to derive per-name sub-seeds.
pub fn name_tag(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}
