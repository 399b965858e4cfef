//! Deterministic, splittable randomness.
//!
//! Every stochastic operation in the crate receives an explicit [`Rng`];
//! there is no global RNG state. Streams are derived from a root seed by
//! hashing a label, so independent subsystems (data sampling, noise,
//! dropout, parameter init) draw from disjoint streams and runs are
//! bit-reproducible given the seed.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

/// A seeded ChaCha stream that can be split into labelled child streams.
pub struct Rng {
    key: [u8; 32],
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self {
            inner: ChaCha8Rng::from_seed(key),
            key,
        }
    }

    /// Derive an independent child stream. The child depends only on this
    /// stream's key and the label, not on how many values were drawn.
    pub fn child(&self, label: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(self.key);
        hasher.update(label.as_bytes());
        let key: [u8; 32] = hasher.finalize().into();
        Self {
            inner: ChaCha8Rng::from_seed(key),
            key,
        }
    }

    /// Child stream keyed by an integer (per-step, per-sample streams).
    pub fn child_idx(&self, label: &str, idx: u64) -> Self {
        self.child(&format!("{label}#{idx}"))
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.inner.gen_range(lo..hi)
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        if std == 0.0 {
            return mean;
        }
        Normal::new(mean, std).unwrap().sample(&mut self.inner)
    }

    pub fn usize_below(&mut self, n: usize) -> usize {
        assert!(n > 0);
        self.inner.gen_range(0..n)
    }

    pub fn f64(&mut self) -> f64 {
        self.inner.gen_range(0.0..1.0)
    }

    /// Sample an index from a discrete distribution (weights need not sum to 1).
    pub fn categorical(&mut self, weights: &[f64]) -> usize {
        let total: f64 = weights.iter().sum();
        assert!(total > 0.0, "categorical: non-positive total weight");
        let mut u = self.f64() * total;
        for (i, w) in weights.iter().enumerate() {
            u -= w;
            if u <= 0.0 {
                return i;
            }
        }
        weights.len() - 1
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.gen_range(0..=i);
            items.swap(i, j);
        }
    }
}
