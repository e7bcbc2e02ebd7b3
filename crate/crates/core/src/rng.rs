//! Seeded random streams.
//!
//! Every stochastic routine draws from [`ChaCha20Rng`], a counter-based
//! generator. Independent substreams are addressed by a 64-bit stream id so
//! that work split across threads reproduces the sequential result.

use rand::SeedableRng;
pub use rand_chacha::ChaCha20Rng;

/// Generator for `seed`, positioned on substream `stream`.
pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes a list of indices into a single stream id (splitmix64 folding).
pub fn stream_id(parts: &[u64]) -> u64 {
    let mut h = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        h ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = splitmix(h);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
