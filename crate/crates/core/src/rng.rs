//! Hierarchical, deterministic RNG streams.
//!
//! Every unit of work (scenario point, input state, basis, resample) gets its
//! own generator derived from the run seed and the unit's index path, so the
//! numbers a unit draws never depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self(splitmix64(seed))
    }

    pub fn child(self, index: u64) -> Self {
        Self(splitmix64(
            self.0 ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)),
        ))
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
