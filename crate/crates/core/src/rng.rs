//! Counter-based random substreams.
//!
//! Every random draw in the solvers is a pure function of a [`StreamKey`] and
//! a counter, so serial and parallel execution see the same numbers no matter
//! how work is scheduled. Generators that need a conventional RNG (maze
//! carving, height fields, rollouts) get a ChaCha8 stream seeded from a key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from a parent seed, a label and an index.
///
/// Distinct labels give unrelated streams, so two experiments never share
/// draws even when run with the same master seed.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    mix64(mix64(parent ^ fnv1a(label.as_bytes())).wrapping_add(mix64(index)))
}

/// Key of a counter-based stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn new(seed: u64) -> Self {
        StreamKey(mix64(seed))
    }

    pub fn seed(self) -> u64 {
        self.0
    }

    pub fn child(self, label: &str, index: u64) -> Self {
        StreamKey(derive_seed(self.0, label, index))
    }

    /// 64 random bits addressed by `(counter, lane)`.
    #[inline]
    pub fn word(self, counter: u64, lane: u64) -> u64 {
        mix64(mix64(self.0 ^ mix64(counter)) ^ lane.wrapping_mul(0xd1b5_4a32_d192_ed03))
    }

    /// Uniform index in `0..n` addressed by `(counter, lane)`. `n` must be nonzero.
    #[inline]
    pub fn index(self, counter: u64, lane: u64, n: usize) -> usize {
        debug_assert!(n > 0);
        ((u128::from(self.word(counter, lane)) * n as u128) >> 64) as usize
    }

    /// A conventional RNG seeded from this key.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
