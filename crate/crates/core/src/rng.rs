//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived from
//! one user seed, so adding or removing a consumer (an adversary, say) never
//! shifts the numbers another consumer sees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Matrix;

/// Independent stream identifiers under a single seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Primary model initialization.
    ModelInit = 1,
    /// Adversary initialization.
    AdversaryInit = 2,
    /// Per-epoch batch shuffling.
    Shuffle = 3,
    /// Train/holdout partitioning.
    Split = 4,
    /// Synthetic data generation.
    Generate = 5,
    /// Permutation tests.
    Permutation = 6,
}

/// A ChaCha8 generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Glorot-uniform initialization: entries in ±sqrt(6 / (fan_in + fan_out)).
pub fn glorot_uniform<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = crate::math::sqrt(6.0 / (rows + cols).max(1) as f64);
    let mut data = alloc::vec::Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(rng.gen_range(-bound..=bound));
    }
    Matrix::from_vec(rows, cols, data)
}

/// Fisher-Yates shuffle of `0..n`.
pub fn permutation<R: Rng>(n: usize, rng: &mut R) -> alloc::vec::Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: alloc::vec::Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}
