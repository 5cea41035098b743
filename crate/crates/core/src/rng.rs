//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha stream identified by a
//! `(seed, stream)` pair, so independent consumers (environment, exploration,
//! replay sampling, per-trial workers) never share state and runs replay
//! exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Stream identifiers used inside a single training run.
pub mod streams {
    pub const ENVIRONMENT: u64 = 1;
    pub const EXPLORATION: u64 = 2;
    pub const REPLAY: u64 = 3;
    pub const INIT: u64 = 4;
    pub const CALIBRATION: u64 = 5;
    pub const BASELINE: u64 = 6;
}

/// Returns the generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a sub-seed for trial `index` so trials can run on any thread in any order.
pub fn trial_seed(seed: u64, index: u64) -> u64 {
    // splitmix64 finalizer over the pair
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
