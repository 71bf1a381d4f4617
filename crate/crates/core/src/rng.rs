//! Named random substreams derived from one master seed.
//!
//! Every consumer draws from its own ChaCha stream, so adding draws in one
//! place (say, the replay sampler) never shifts the environment's randomness.
//! Runs of different methods with the same seed therefore face identical
//! motion and label streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MOTION: u64 = 0;
const LABELS: u64 = 1;
const POLICY: u64 = 2;
const REPLAY: u64 = 3;

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Randomness consumed by the environment: slip outcomes and start cells on
/// `motion`, label observations on `labels`.
#[derive(Debug, Clone)]
pub struct EnvRng {
    pub motion: ChaCha8Rng,
    pub labels: ChaCha8Rng,
}

impl EnvRng {
    pub fn new(seed: u64) -> Self {
        EnvRng {
            motion: substream(seed, MOTION),
            labels: substream(seed, LABELS),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Streams {
    pub env: EnvRng,
    pub policy: ChaCha8Rng,
    pub replay: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Streams {
            env: EnvRng::new(seed),
            policy: substream(seed, POLICY),
            replay: substream(seed, REPLAY),
        }
    }
}
