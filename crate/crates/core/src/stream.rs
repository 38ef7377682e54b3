//! Counter-based random streams.
//!
//! Every path draws from its own ChaCha8 stream. The 256-bit key is expanded
//! from `(master_seed, domain)` with SplitMix64 and the ChaCha stream id is
//! the path index, so a path's randomness depends only on where it sits in
//! the experiment and never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type PathRng = ChaCha8Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn mix(a: u64, b: u64) -> u64 {
    let mut s = a ^ b.rotate_left(17);
    splitmix64(&mut s) ^ splitmix64(&mut s)
}

/// Identifies a family of per-path streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamKey {
    pub master_seed: u64,
    pub domain: u64,
}

impl StreamKey {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            domain: 0,
        }
    }

    /// Derived family for a named sub-experiment.
    pub fn child(&self, label: &str) -> Self {
        Self {
            master_seed: self.master_seed,
            domain: mix(self.domain, fnv1a(label)),
        }
    }

    /// Derived family for an indexed sub-experiment (level, set, ...).
    pub fn index(&self, i: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            domain: mix(self.domain, i.wrapping_add(0x5851_f42d_4c95_7f2d)),
        }
    }

    pub fn path_rng(&self, path_index: u64) -> PathRng {
        let mut state = self.master_seed ^ self.domain.rotate_left(29);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(path_index);
        rng
    }
}
