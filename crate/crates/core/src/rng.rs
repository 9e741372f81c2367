//! Keyed random streams.
//!
//! Every random draw in a run comes from a ChaCha stream derived from the
//! run seed plus a small tuple of tags (purpose, device, round, step). The
//! stream for a given key does not depend on evaluation order, so serial and
//! parallel execution see identical randomness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream purposes. Values are part of the reproducibility contract.
pub mod tag {
    pub const MINIBATCH: u64 = 1;
    pub const CHANNEL_NOISE: u64 = 2;
    pub const PROJECTION: u64 = 3;
    pub const PARTITION: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const INIT: u64 = 6;
    pub const PROBE: u64 = 7;
    pub const SUBSET: u64 = 8;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed and a list of tags into a single 64-bit key.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(seed: u64, tags: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}
