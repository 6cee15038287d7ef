//! Seed derivation for reproducible sub-streams.
//!
//! Every randomized component (config sampling, weight init, per-epoch
//! shuffles, per-tree bootstraps, load-generator workers) derives its own
//! seed from a master seed so streams never alias across components.

/// SplitMix64 step; the standard seed-expansion mixer.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `master` for stream `stream`, item `index`.
pub fn derive_seed(master: u64, stream: u64, index: u64) -> u64 {
    let mut state = master ^ stream.wrapping_mul(0xa076_1d64_78bd_642f) ^ index.wrapping_mul(0xe703_7ed1_a0b4_28db);
    splitmix64(&mut state)
}
