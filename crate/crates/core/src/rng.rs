//! Counter-based random streams.
//!
//! Every random quantity is drawn from a ChaCha8 stream whose key is a pure function
//! of a user seed and an index path such as `(purpose, draw, column)`. Work items can
//! therefore be generated in any order, or concurrently, with identical results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used across the crate so that no two purposes share a key.
pub mod tag {
    pub const SIGMA_DRAW: u64 = 1;
    pub const LOADING_COLUMN: u64 = 2;
    pub const RHO_PAIRS: u64 = 3;
    pub const SIM_GAMMA: u64 = 10;
    pub const SIM_PSI: u64 = 11;
    pub const SIM_FACTORS: u64 = 12;
    pub const SIM_NOISE: u64 = 13;
    pub const SIM_GENESETS: u64 = 14;
    pub const SIM_TEST_FACTORS: u64 = 15;
    pub const SIM_TEST_NOISE: u64 = 16;
    pub const SUBSET: u64 = 20;
    pub const SPLIT: u64 = 21;
    pub const REPLICATION: u64 = 22;
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit child seed from `seed` and an index path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut acc = splitmix64(&mut state);
    for &p in path {
        state ^= p.wrapping_mul(0xD6E8_FEB8_6659_FD93).rotate_left(17);
        acc = splitmix64(&mut state) ^ acc.rotate_left(29);
    }
    acc
}

/// Returns an independent generator keyed by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
