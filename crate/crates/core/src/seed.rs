//! Named random streams derived from one master seed.
//!
//! Every consumer of randomness gets its own ChaCha stream, so changing how
//! many numbers one component draws never perturbs another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Network weight initialization.
    Init,
    /// Epsilon-greedy action choice.
    Exploration,
    /// Replay-buffer minibatch sampling.
    Sampling,
    /// Uniform-random baseline policy.
    RandomBaseline,
}

impl Stream {
    fn id(self) -> u64 {
        match self {
            Stream::Init => 1,
            Stream::Exploration => 2,
            Stream::Sampling => 3,
            Stream::RandomBaseline => 4,
        }
    }
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.id());
    rng
}
