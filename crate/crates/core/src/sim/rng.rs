//! Counter-based normal streams.
//!
//! Every draw is addressed by `(seed, tag, index, replicate)`. The ChaCha8 key
//! comes from `seed`, the stream id from a hash of `(tag, index)`, and the
//! replicate selects the word position, so any replicate can be generated in
//! isolation and results do not depend on how work is split across threads.
//! Each standard normal consumes one 64-bit word: its top 52 bits give a
//! uniform in `(0, 1)` that is mapped through the inverse normal CDF.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::numerics::special::inverse_normal_cdf;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream id for `(tag, index)`.
pub fn stream_id(tag: &str, index: u64) -> u64 {
    splitmix64(fnv1a(tag.as_bytes()) ^ splitmix64(index))
}

/// A family of replicate streams sharing a seed, tag and index.
#[derive(Clone)]
pub struct NormalStreams {
    base: ChaCha8Rng,
    dim: usize,
}

impl NormalStreams {
    pub fn new(seed: u64, tag: &str, index: u64, dim: usize) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(seed);
        base.set_stream(stream_id(tag, index));
        NormalStreams { base, dim }
    }

    /// Fills `out` (length `dim`) with the normals of `replicate`.
    pub fn fill(&self, replicate: u64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let mut rng = self.base.clone();
        rng.set_word_pos(u128::from(replicate) * self.dim as u128 * 2);
        for z in out.iter_mut() {
            *z = inverse_normal_cdf(uniform_open(rng.next_u64()));
        }
    }

    /// Uniform integers below `bound` for `replicate`, one word each.
    pub fn fill_indices(&self, replicate: u64, bound: usize, out: &mut [usize]) {
        let mut rng = self.base.clone();
        rng.set_word_pos(u128::from(replicate) * self.dim as u128 * 2);
        for v in out.iter_mut() {
            // Multiply-shift reduction; the bias is below 2^-40 for the
            // sample sizes used here.
            *v = ((u128::from(rng.next_u64()) * bound as u128) >> 64) as usize;
        }
    }
}

/// Uniform in the open interval `(0, 1)` from the top 52 bits.
pub fn uniform_open(x: u64) -> f64 {
    ((x >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicates_are_addressable() {
        let s = NormalStreams::new(7, "test", 0, 3);
        let mut a = [0.0; 3];
        let mut b = [0.0; 3];
        s.fill(5, &mut a);
        s.fill(4, &mut b);
        s.fill(5, &mut b);
        assert_eq!(a, b);
        let other = NormalStreams::new(7, "test", 1, 3);
        other.fill(5, &mut b);
        assert_ne!(a, b);
    }

    #[test]
    fn uniform_bounds() {
        assert!(uniform_open(0) > 0.0);
        assert!(uniform_open(u64::MAX) < 1.0);
    }
}
