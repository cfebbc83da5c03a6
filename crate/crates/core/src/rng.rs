//! Seed derivation. Every stream of randomness in a run descends from one
//! `u64` seed through [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent child seed for `(base, index)`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    mix(mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93))
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Domain tags for [`derive_seed`].
pub mod stream {
    pub const SCENE: u64 = 1;
    pub const NOISE: u64 = 2;
    pub const POLICY: u64 = 3;
    pub const NETWORK: u64 = 4;
    pub const TRAINER: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const EPISODE: u64 = 7;
}
