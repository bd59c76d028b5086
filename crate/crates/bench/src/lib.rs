//! Deterministic inputs shared by the criterion benches.

use prunerank_core::{EmbeddingMatrix, Permutation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `rows x dim` matrix with entries uniform in [-1, 1].
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> EmbeddingMatrix {
    let data = (0..rows * dim)
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    EmbeddingMatrix::new(rows, dim, data).expect("finite non-empty matrix")
}

pub fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()
}

pub fn random_permutation(rng: &mut ChaCha8Rng, m: usize) -> Permutation {
    let mut order: Vec<usize> = (0..m).collect();
    order.shuffle(rng);
    Permutation::new(order).expect("shuffle is a bijection")
}
