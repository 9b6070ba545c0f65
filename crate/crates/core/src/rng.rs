//! Named, seed-derived RNG streams.
//!
//! Every source of randomness in a simulation is a [`ChaCha8Rng`] derived from
//! the scenario's master seed and a stream name. Stream names are structural
//! (`shadow/<link>`, `loss/<directed link>`, `agent/<node>`, `worker/<node>`,
//! `fl/centers`, `fl/compute`), so the draws seen by one component never depend
//! on how many draws another component made or in which order links are
//! evaluated.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Factory for named sub-streams of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    master: u64,
}

impl SeedStreams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, name: &str) -> SimRng {
        ChaCha8Rng::seed_from_u64(derive_seed(self.master, name))
    }
}

/// 64-bit FNV-1a over the stream name, mixed with the master seed through
/// splitmix64. Stable across platforms and releases.
pub fn derive_seed(master: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(master ^ splitmix64(h))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
