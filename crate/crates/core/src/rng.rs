//! Reproducible per-replica random streams.
//!
//! Replica `i` of an experiment with seed `s` draws from ChaCha8 keyed by
//! `seed_from_u64(s)` with stream id `i`. ChaCha is counter based, so every
//! replica's stream is fixed by `(s, i)` alone and results do not depend on
//! how replicas are scheduled across workers.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Random stream owned by a single replica.
#[derive(Debug, Clone)]
pub struct ReplicaStream {
    rng: ChaCha8Rng,
    bits: u64,
    bits_left: u32,
}

impl ReplicaStream {
    pub fn new(seed: u64, replica: u64) -> ReplicaStream {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replica);
        ReplicaStream {
            rng,
            bits: 0,
            bits_left: 0,
        }
    }

    /// One fair bit; bits are taken least-significant first from 64-bit words.
    #[inline]
    pub fn next_bit(&mut self) -> bool {
        if self.bits_left == 0 {
            self.bits = self.rng.next_u64();
            self.bits_left = 64;
        }
        let bit = self.bits & 1 == 1;
        self.bits >>= 1;
        self.bits_left -= 1;
        bit
    }

    /// Fills `out` with `±magnitude`, one bit per value in [`next_bit`] order
    /// (set bit → `+magnitude`).
    ///
    /// [`next_bit`]: ReplicaStream::next_bit
    #[inline]
    pub fn fill_signs(&mut self, magnitude: f64, out: &mut [f64]) {
        let positive = magnitude.abs().to_bits();
        let mut i = 0;
        while i < out.len() {
            if self.bits_left == 0 {
                self.bits = self.rng.next_u64();
                self.bits_left = 64;
            }
            let take = (self.bits_left as usize).min(out.len() - i);
            let mut bits = self.bits;
            for slot in &mut out[i..i + take] {
                *slot = f64::from_bits(positive | ((!bits & 1) << 63));
                bits >>= 1;
            }
            self.bits = bits;
            self.bits_left -= take as u32;
            i += take;
        }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    #[inline]
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// SplitMix64 finalizer applied to `seed ⊕ golden·(tag+1)`; used to give each
/// point of an experiment grid its own seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
