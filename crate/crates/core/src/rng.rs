//! Deterministic random streams.
//!
//! Every stochastic operation takes its randomness from a stream derived from
//! a `(seed, stream_id)` pair. ChaCha8 with an explicit stream id gives
//! independent, platform-stable sequences without any shared state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RngStream = ChaCha8Rng;

/// Build the random stream for `(seed, stream_id)`.
pub fn derive_rng(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

/// Fold several identifiers into one stream id.
pub fn stream_id(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x9E37_79B9_7F4A_7C15u64, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Derive a child seed, e.g. a per-episode seed from a corpus seed.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0xD1B5_4A32_D192_ED03)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Well-known stream ids so that unrelated consumers never share a stream.
pub mod streams {
    pub const PLACEMENT: u64 = 1;
    pub const PERCEPTION: u64 = 2;
    pub const THETA_SCHEDULE: u64 = 3;
    pub const FILTER_INIT: u64 = 4;
    pub const FILTER_PROPAGATE: u64 = 5;
    pub const FILTER_RESAMPLE: u64 = 6;
    pub const ROLLOUT: u64 = 7;
    pub const CALIBRATION: u64 = 8;
}
