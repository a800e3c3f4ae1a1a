//! Deterministic RNG stream derivation.
//!
//! Every source of randomness in a run is a ChaCha stream keyed by the
//! global seed plus a path of integers (agent id, purpose tag, round, ...).
//! Streams for different paths are statistically independent, so results do
//! not depend on whether agents execute sequentially or in parallel.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags separating the independent streams of one agent.
pub mod tag {
    pub const MORPH: u64 = 1;
    pub const INIT: u64 = 2;
    pub const ENV_RESET: u64 = 3;
    pub const ACTION: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const EVAL: u64 = 6;
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha stream from a global seed and a path of integers.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let _ = splitmix64(&mut state);
    for &p in path {
        state ^= splitmix64(&mut (p ^ 0xa54f_f53a_5f1d_36f1));
        let _ = splitmix64(&mut state);
    }
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
