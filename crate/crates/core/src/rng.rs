//! Deterministic random streams.
//!
//! A run owns one seed. Every consumer of randomness (price noise, jump
//! counts, jump sizes, policy sampling, test functions, initialization)
//! draws from its own ChaCha stream, so changing the policy never shifts
//! the market draws of an episode. Two policies evaluated on the same
//! episode index see the same Brownian increments and jumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What an episode is used for; disjoint index spaces per purpose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Training = 0,
    Evaluation = 1,
    Test = 2,
    Init = 3,
    Scratch = 4,
    /// Per-epoch progress rollouts during training.
    Monitor = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    Price = 0,
    JumpCount = 1,
    JumpSize = 2,
    Policy = 3,
    TestFunction = 4,
    Weights = 5,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RunSeed(pub u64);

impl RunSeed {
    pub fn stream(self, domain: Domain, index: u64, stream: Stream) -> StreamRng {
        debug_assert!(index < 1 << 52);
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(((domain as u64) << 56) | (index << 4) | stream as u64);
        rng
    }

    pub fn episode(self, domain: Domain, index: u64) -> EpisodeRng {
        EpisodeRng {
            market: MarketNoise {
                price: self.stream(domain, index, Stream::Price),
                jump_count: self.stream(domain, index, Stream::JumpCount),
                jump_size: self.stream(domain, index, Stream::JumpSize),
            },
            policy: self.stream(domain, index, Stream::Policy),
        }
    }
}

/// Exogenous market randomness for one episode.
#[derive(Clone, Debug)]
pub struct MarketNoise {
    pub price: StreamRng,
    pub jump_count: StreamRng,
    pub jump_size: StreamRng,
}

#[derive(Clone, Debug)]
pub struct EpisodeRng {
    pub market: MarketNoise,
    pub policy: StreamRng,
}
