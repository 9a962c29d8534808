//! Seed derivation. Every stochastic step takes its generator from a
//! [`SeedStream`] path so that results depend only on the root seed and the
//! position of the call (epoch, bag, layer), never on call order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// One round of the SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    seed: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream keyed by `key`; distinct keys give independent streams.
    pub fn split(&self, key: u64) -> Self {
        Self {
            seed: splitmix64(self.seed ^ splitmix64(key.wrapping_mul(GOLDEN).wrapping_add(1))),
        }
    }

    pub fn derive(&self, path: &[u64]) -> Self {
        path.iter().fold(*self, |s, &k| s.split(k))
    }

    pub fn rng(&self) -> Rng {
        Rng::seed_from_u64(self.seed)
    }
}
