//! Deterministic stream derivation.
//!
//! Every randomized operation in the crate takes an explicit `u64` seed and
//! derives independent ChaCha streams from it with [`stream`]. ChaCha output
//! is identical across platforms, so a seed pins results bit-for-bit, and
//! derived streams let restarts, replicates, and per-slice draws run in any
//! order (or in parallel) without changing what each one produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer; a cheap, well-mixing injection on `u64`.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed for a labeled substream.
pub fn substream(seed: u64, tags: &[u64]) -> u64 {
    let mut state = mix(seed);
    for &tag in tags {
        state = mix(state ^ mix(tag));
    }
    state
}

/// An RNG for the substream of `seed` identified by `tags`.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(substream(seed, tags))
}
