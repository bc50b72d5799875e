//! Reproducible random substreams.
//!
//! Every random draw in a run comes from a ChaCha8 generator keyed by the
//! 64-bit base seed (expanded through `seed_from_u64`) and positioned on a
//! stream number derived from `(pair, replication, role)`:
//!
//! ```text
//! stream = pair << 35 | replication << 3 | role
//! ```
//!
//! ChaCha is counter based, so distinct stream numbers give independent,
//! non-overlapping sequences and a replication's draws do not depend on
//! which worker thread executes it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Role {
    Field = 0,
    Noise = 1,
    Init = 2,
    /// ξ₁ / ξ₂ driving noise of the limit equations.
    LimitNoise = 3,
    /// ξ₃ driving noise; kept separate so ξ₂ ⊥ ξ₃.
    LimitInteraction = 4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamId {
    pub pair: u32,
    pub replication: u32,
    pub role: Role,
}

impl StreamId {
    pub fn new(pair: u32, replication: u32, role: Role) -> Self {
        Self {
            pair,
            replication,
            role,
        }
    }

    pub fn stream_number(&self) -> u64 {
        ((self.pair as u64) << 35) | ((self.replication as u64) << 3) | self.role as u64
    }

    pub fn rng(&self, base_seed: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(self.stream_number());
        rng
    }
}

/// Shorthand for `StreamId::new(pair, replication, role).rng(seed)`.
pub fn substream(seed: u64, pair: u32, replication: u32, role: Role) -> ChaCha8Rng {
    StreamId::new(pair, replication, role).rng(seed)
}
