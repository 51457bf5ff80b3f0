//! Seedable random streams with deterministic forking.
//!
//! Every stochastic routine in this crate draws from a [`RandomStream`].
//! A stream is fully determined by its 64-bit seed, and child streams are
//! derived from (seed, sub-seed) alone, so results are reproducible across
//! runs, platforms, and any scheduling of parallel work.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha12Rng,
    seed: u64,
}

// SplitMix64 finalizer; decorrelates nearby seeds.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub fn new(seed: u64) -> Self {
        RandomStream { rng: ChaCha12Rng::seed_from_u64(seed), seed }
    }

    /// Derives an independent child stream. Children with distinct sub-seeds
    /// never share state with each other or with the parent; the derivation
    /// depends only on the parent seed and the sub-seed, not on how much of
    /// the parent stream has been consumed.
    pub fn fork(&self, subseed: u64) -> Self {
        let mixed = splitmix64(self.seed ^ splitmix64(subseed.wrapping_add(0xa076_1d64_78bd_642f)));
        RandomStream::new(mixed)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform draw on the open interval (0, 1); never returns 0.
    pub fn uniform_open(&mut self) -> f64 {
        loop {
            let u: f64 = rand::Rng::random(&mut self.rng);
            if u > 0.0 {
                return u;
            }
        }
    }
}

impl RngCore for RandomStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }
}
