//! Seed derivation helpers.
//!
//! Every random decision in the crate flows from an explicit `u64` seed
//! through [`stream`]. Sub-streams are derived with [`mix`] so that
//! independent components (nodes, rounds, samples) never share state.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; decorrelates structured seed inputs.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine two seeds into a new independent one. Not commutative.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix(splitmix(a).wrapping_add(b))
}

/// Deterministic generator for a seed.
pub fn stream(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed))
}
