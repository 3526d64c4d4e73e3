//! Seeded, stream-separated random number generators.
//!
//! Every random consumer draws from its own ChaCha stream so that changing
//! one stage (say, the number of metric projections) never shifts the draws
//! of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_TASK: u64 = 1;
pub const STREAM_SLOTS: u64 = 2;
pub const STREAM_RESAMPLE: u64 = 3;
pub const STREAM_METRICS: u64 = 4;
pub const STREAM_EVAL: u64 = 5;
pub const STREAM_SAMPLE: u64 = 6;

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}
