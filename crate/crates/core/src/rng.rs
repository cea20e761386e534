//! Per-node deterministic generator.
//!
//! The stream is plain SplitMix64. For node `rank` in a campaign seeded with
//! `seed`, the initial state is
//!
//! ```text
//! state = seed + (rank + 1) * 0xD1B54A32D192ED03   (wrapping u64 arithmetic)
//! ```
//!
//! and each draw performs
//!
//! ```text
//! state += 0x9E3779B97F4A7C15
//! z = state
//! z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//! z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//! out = z ^ (z >> 31)
//! ```
//!
//! Derived draws: `below(n) = (out * n) >> 64` computed in 128 bits, and
//! `chance(p) = (out >> 11) * 2^-53 < p`. Any implementation following these
//! rules replays the same campaigns.

use rand_core::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

const RANK_STRIDE: u64 = 0xD1B5_4A32_D192_ED03;

#[derive(Debug, Clone)]
pub struct NodeRng {
    inner: SplitMix64,
}

impl NodeRng {
    pub fn from_state(state: u64) -> Self {
        NodeRng {
            inner: SplitMix64::from_seed(state.to_le_bytes()),
        }
    }

    pub fn for_node(seed: u64, rank: u32) -> Self {
        let state = seed.wrapping_add((rank as u64 + 1).wrapping_mul(RANK_STRIDE));
        Self::from_state(state)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform-ish integer in `0..n`. `n` must be positive.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        let unit = (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        unit < p
    }

    pub fn byte(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }
}
