//! Deterministic seeding helpers.
//!
//! Every stochastic component derives its stream from a 64-bit seed through
//! [`mix64`], so domains, epochs and commands are independently reproducible
//! and insensitive to generation order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// SplitMix64-style avalanche mix of a seed and a stream index.
pub fn mix64(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A ChaCha stream for the given seed.
pub fn seeded_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
