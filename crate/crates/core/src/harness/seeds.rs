//! Seed splitting.
//!
//! Every run seed `s` is expanded into independent sub-streams with
//! `split(s, stream) = splitmix64(s ^ splitmix64(stream + 1))`, where
//! `splitmix64` is the SplitMix64 output function. Streams are numbered
//! [`ENV`], [`INIT`], [`EXPLORATION`], [`EVAL`] and [`RND`]; episode `k` of a
//! stream uses `split(stream_seed, k)`. Evaluation therefore never consumes
//! randomness from the training streams.

use serde::{Deserialize, Serialize};

pub const ENV: u64 = 0;
pub const INIT: u64 = 1;
pub const EXPLORATION: u64 = 2;
pub const EVAL: u64 = 3;
pub const RND: u64 = 4;

/// SplitMix64 output function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn split(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedStreams {
    pub env: u64,
    pub init: u64,
    pub exploration: u64,
    pub eval: u64,
    pub rnd: u64,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env: split(seed, ENV),
            init: split(seed, INIT),
            exploration: split(seed, EXPLORATION),
            eval: split(seed, EVAL),
            rnd: split(seed, RND),
        }
    }
}
