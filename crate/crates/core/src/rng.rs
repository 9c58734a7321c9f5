//! Seeded random streams.
//!
//! Every trial derives independent ChaCha streams from its seed, one per
//! consumer, so adding draws to one consumer never shifts another. Two
//! configurations run with the same seed therefore share environment and
//! policy randomness (common random numbers).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Consumers of randomness within a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Schedule = 0,
    Environment = 1,
    Observation = 2,
    Policy = 3,
}

pub fn stream(seed: u64, which: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct TrialStreams {
    pub schedule: StreamRng,
    pub environment: StreamRng,
    pub observation: StreamRng,
    pub policy: StreamRng,
}

impl TrialStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            schedule: stream(seed, Stream::Schedule),
            environment: stream(seed, Stream::Environment),
            observation: stream(seed, Stream::Observation),
            policy: stream(seed, Stream::Policy),
        }
    }
}
