//! Counter-based randomness. Every random quantity is a pure function of the
//! top-level seed and a key naming the object it belongs to.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_xoshiro::SplitMix64;

pub const TAG_COUNT: u64 = 0x636f_756e_74;
pub const TAG_VERTEX: u64 = 0x7665_7274;
pub const TAG_EDGE: u64 = 0x6564_6765;
pub const TAG_BLOCK: u64 = 0x626c_6f63_6b;
pub const TAG_PALM: u64 = 0x7061_6c6d;
pub const TAG_REP: u64 = 0x7265_70;

#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of an ordered key tuple.
#[inline]
pub fn key(parts: &[u64]) -> u64 {
    let mut h = 0x243f_6a88_85a3_08d3u64;
    for &p in parts {
        h = mix64(h ^ p);
    }
    h
}

#[inline]
pub fn unit_f64(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Seed-dependent part of the edge coins, see [`PairCoins`].
#[derive(Clone, Copy, Debug)]
pub struct PairCoins(u64);

impl PairCoins {
    pub fn new(seed: u64) -> Self {
        PairCoins(key(&[seed, TAG_EDGE]))
    }

    /// The edge coin of the unordered pair {u, v}; uniform on [0, 1).
    #[inline]
    pub fn uniform(self, u: u32, v: u32) -> f64 {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        unit_f64(mix64(self.0 ^ (((a as u64) << 32) | b as u64)))
    }
}

/// The edge coin of the unordered pair {u, v} under `seed`.
pub fn pair_uniform(seed: u64, u: u32, v: u32) -> f64 {
    PairCoins::new(seed).uniform(u, v)
}

/// Portable stream for per-object sampling (vertices, counts, replicates).
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(&[seed, tag, index]))
}

/// Cheap stream for short-lived work items such as cell-pair blocks.
pub fn light_stream(parts: &[u64]) -> SplitMix64 {
    SplitMix64::seed_from_u64(key(parts))
}

/// Seed of replicate `rep` derived from a campaign seed.
pub fn rep_seed(seed: u64, label: u64, rep: u64) -> u64 {
    key(&[seed, TAG_REP, label, rep])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_coin_is_symmetric() {
        for s in 0..20 {
            assert_eq!(pair_uniform(s, 3, 9), pair_uniform(s, 9, 3));
        }
    }

    #[test]
    fn pair_coin_mean_and_range() {
        let mut sum = 0.0;
        let m = 200_000;
        for i in 0..m {
            let u = pair_uniform(7, i, i + 1);
            assert!((0.0..1.0).contains(&u));
            sum += u;
        }
        let mean = sum / m as f64;
        assert!((mean - 0.5).abs() < 4.0 * (1.0 / 12.0f64 / m as f64).sqrt());
    }
}
