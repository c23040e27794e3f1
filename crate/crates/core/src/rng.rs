//! Seed-derived random streams.
//!
//! Every random object is drawn from its own ChaCha stream keyed by
//! `(seed, domain)` and selected by an index, so draw `i` never depends on how
//! many draws came before it or on which thread produced it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent families of draws that share a user seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    TrainSubsets = 1,
    HoldoutSubsets = 2,
    World = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
    domain: Domain,
}

impl SeedStream {
    pub fn new(seed: u64, domain: Domain) -> Self {
        Self { seed, domain }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Generator for draw `index` of this stream.
    pub fn rng(&self, index: u64) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&(self.domain as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(index);
        rng
    }
}
