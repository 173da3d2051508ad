//! Deterministic seed derivation.
//!
//! Every stochastic stage of the pipeline draws from a [`ChaCha8Rng`] keyed by
//! a base seed, a string label, and integer indices. The derivation is pure
//! integer arithmetic, so identical (seed, label, indices) always yields the
//! identical stream on every platform. Tests reproduce internal draws (e.g.
//! reparameterization noise) through these same helpers.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Mix a base seed with a label and indices into a new 64-bit seed.
///
/// FNV-1a over the label bytes and indices, finalized with a splitmix64 round.
pub fn derive_seed(base: u64, label: &str, indices: &[u64]) -> u64 {
    const FNV_OFFSET: u64 = 0xcbf29ce484222325;
    const FNV_PRIME: u64 = 0x100000001b3;

    let mut h = FNV_OFFSET ^ base;
    for b in label.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    for ix in indices {
        for b in ix.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    // splitmix64 finalizer
    h = h.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// A seeded RNG for the given (base, label, indices) stream.
pub fn stream(base: u64, label: &str, indices: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, label, indices))
}

/// Draw a rows x cols matrix of standard normal samples.
pub fn standard_normal(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Standard normal matrix for a named stream; convenience over [`stream`].
pub fn seeded_normal(base: u64, label: &str, indices: &[u64], rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = stream(base, label, indices);
    standard_normal(&mut rng, rows, cols)
}
