//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by an
//! explicit seed and a stream tag, so independent consumers (shuffling, noise,
//! initialization) never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SeededRng = ChaCha8Rng;

pub(crate) mod tag {
    pub const SPLIT: u64 = 1;
    pub const PLANT: u64 = 2;
    pub const INIT: u64 = 3;
    pub const NOISE: u64 = 4;
    pub const MI_SAMPLE: u64 = 5;
    pub const DETECTOR: u64 = 6;
    pub const NEGATIVES: u64 = 7;
    pub const SYNTH: u64 = 8;
    /// Minibatch streams use `EPOCH_BASE + epoch`.
    pub const EPOCH_BASE: u64 = 1 << 32;
}

/// Generator for `(seed, stream)`.
pub fn stream(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
