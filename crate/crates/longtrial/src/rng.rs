//! Deterministic, order-independent random streams.
//!
//! Every parallel work item (bootstrap replicate, simulated trial, jackknife
//! fold) derives its own generator from the run seed and its index, so results
//! do not depend on scheduling or worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64 step; used only to mix seeds, never to produce variates.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `seed` with a path of stream labels into a single 64-bit value.
pub fn stream_id(seed: u64, path: &[u64]) -> u64 {
    let mut state = seed;
    let mut out = splitmix64(&mut state);
    for &part in path {
        state ^= part.wrapping_mul(0xd6e8_feb8_6659_fd93);
        out ^= splitmix64(&mut state);
    }
    out
}

/// A generator for the stream identified by `(seed, path)`.
pub fn stream_rng(seed: u64, path: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stream_id(seed, path))
}
