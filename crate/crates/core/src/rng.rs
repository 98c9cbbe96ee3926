//! Reproducible random streams.
//!
//! Every generator in this crate draws from a ChaCha8 stream seeded with a
//! 64-bit seed (`ChaCha8Rng::seed_from_u64`). ChaCha output is specified
//! independently of platform and word size, so a seed yields the same bits
//! everywhere. Gaussians use the Marsaglia polar method so that the mapping
//! from uniforms to normals is fixed here rather than left to a dependency.
//!
//! Sub-seeds for independent tasks (trials in a sweep, the perturbation of a
//! generated instance) are derived with [`derive_seed`], a SplitMix64 fold
//! over the root seed and a list of 64-bit words.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Stream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform integer in `0..upper`.
    pub fn below(&mut self, upper: usize) -> usize {
        self.rng.random_range(0..upper)
    }

    pub fn sign(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Standard normal via the polar method; the second variate of each pair is cached.
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let q = u * u + v * v;
            if q > 0.0 && q < 1.0 {
                let f = (-2.0 * q.ln() / q).sqrt();
                self.spare = Some(v * f);
                return u * f;
            }
        }
    }

    /// First `k` entries of a seeded partial Fisher-Yates shuffle of `0..n`, sorted.
    pub fn subset(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            pool.swap(i, j);
        }
        let mut out = pool[..k].to_vec();
        out.sort_unstable();
        out
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed: `h = splitmix(root)`, then `h = splitmix(h ^ w)` per word.
pub fn derive_seed(root: u64, words: &[u64]) -> u64 {
    words
        .iter()
        .fold(splitmix64(root), |h, &w| splitmix64(h ^ w))
}
