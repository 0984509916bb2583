//! Named random streams derived from a single seed.
//!
//! Each component draws from its own ChaCha stream so that changing how much
//! randomness one component consumes never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Default seed for every command.
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Dataset,
    Simulator,
    Init,
    Features,
    Shuffle,
    Probe,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Dataset => 1,
            Stream::Simulator => 2,
            Stream::Init => 3,
            Stream::Features => 4,
            Stream::Shuffle => 5,
            Stream::Probe => 6,
        }
    }
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which.id());
    rng
}

/// A stream further split by an index, e.g. one per generated example.
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .rotate_left(17)
        ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(which.id());
    rng
}
