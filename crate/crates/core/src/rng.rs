//! Seeded random-number streams.
//!
//! All randomness in the crate flows through named substreams of a single
//! root seed. The scheme is a counter construction: a substream is
//! identified by a static label plus up to two integer indices, hashed
//! through SplitMix64. Streams are therefore reproducible, independent of
//! evaluation order, and safe to draw from in parallel (each worker owns
//! its own substream).

use rand::{Rng, RngExt};
use rand::SeedableRng;
use rand_pcg::Pcg64;

/// SplitMix64 finalizer, used as the mixing function of the seed tree.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn label_hash(label: &str) -> u64 {
    // FNV-1a, stable across platforms.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Child seed for `(root, label, index)`.
pub fn substream(root: u64, label: &str, index: u64) -> u64 {
    splitmix64(splitmix64(root ^ label_hash(label)).wrapping_add(index))
}

/// Child seed for `(root, label, i, j)`, e.g. per-(node, replica) streams.
pub fn substream2(root: u64, label: &str, i: u64, j: u64) -> u64 {
    splitmix64(substream(root, label, i).wrapping_add(splitmix64(j)))
}

/// PCG64 generator on the given substream.
pub fn stream(root: u64, label: &str, index: u64) -> Pcg64 {
    Pcg64::seed_from_u64(substream(root, label, index))
}

/// PCG64 generator on the given doubly-indexed substream.
pub fn stream2(root: u64, label: &str, i: u64, j: u64) -> Pcg64 {
    Pcg64::seed_from_u64(substream2(root, label, i, j))
}

/// Exponential waiting time with the given rate, by inversion.
pub fn exp_time<R: Rng + RngExt>(rng: &mut R, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.random();
    let u = if u == 0.0 { f64::MIN_POSITIVE } else { u };
    -u.ln() / rate
}

/// Walker's alias table for O(1) sampling from a fixed discrete law.
#[derive(Debug, Clone)]
pub struct AliasTable {
    prob: Vec<f64>,
    alias: Vec<u32>,
}

impl AliasTable {
    /// Build from nonnegative weights (not necessarily normalized).
    ///
    /// Empty or all-zero weights are rejected by the caller; here the
    /// table over zero total weight falls back to uniform.
    pub fn new(weights: &[f64]) -> Self {
        let n = weights.len();
        assert!(n > 0, "alias table over empty support");
        let total: f64 = weights.iter().sum();
        let scale = if total > 0.0 { n as f64 / total } else { 0.0 };
        let mut prob: Vec<f64> = weights
            .iter()
            .map(|w| if total > 0.0 { w * scale } else { 1.0 })
            .collect();
        let mut alias = vec![0u32; n];
        let mut small: Vec<u32> = Vec::new();
        let mut large: Vec<u32> = Vec::new();
        for (k, p) in prob.iter().enumerate() {
            if *p < 1.0 {
                small.push(k as u32);
            } else {
                large.push(k as u32);
            }
        }
        while let (Some(s), Some(l)) = (small.pop(), large.pop()) {
            alias[s as usize] = l;
            prob[l as usize] -= 1.0 - prob[s as usize];
            if prob[l as usize] < 1.0 {
                small.push(l);
            } else {
                large.push(l);
            }
        }
        for s in small.into_iter().chain(large) {
            prob[s as usize] = 1.0;
        }
        AliasTable { prob, alias }
    }

    pub fn sample<R: Rng + RngExt>(&self, rng: &mut R) -> usize {
        let n = self.prob.len();
        let k = rng.random_range(0..n);
        let u: f64 = rng.random();
        if u < self.prob[k] {
            k
        } else {
            self.alias[k] as usize
        }
    }

    pub fn len(&self) -> usize {
        self.prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prob.is_empty()
    }
}
