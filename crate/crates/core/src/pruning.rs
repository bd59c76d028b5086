//! Query-aware visual token pruning.
//!
//! Each visual token is scored by its maximum cosine similarity to any query
//! hidden state. Per image, the `max(1, round(rho * N))` best tokens are kept
//! and handed back in their original order so spatial ordering and positional
//! encodings survive. A uniform random baseline and the max-vs-LSE stability
//! diagnostics live here as well.

use std::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{similarity_matrix, EmbeddingMatrix, SimilarityMatrix};

/// Column-wise max and log-sum-exp pooling of a similarity matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneScores {
    pub max_sim: Vec<f64>,
    pub lse: Vec<f64>,
    pub n_query: usize,
}

impl PruneScores {
    pub fn from_similarity(s: &SimilarityMatrix) -> Result<Self> {
        Ok(Self {
            max_sim: maxsim_scores(s)?,
            lse: lse_scores(s)?,
            n_query: s.n_query(),
        })
    }

    /// Largest violation of `max <= lse <= max + ln(n_query)` over all tokens.
    /// Non-positive means the sandwich holds exactly.
    pub fn sandwich_violation(&self) -> f64 {
        let ln_nq = (self.n_query as f64).ln();
        self.max_sim
            .iter()
            .zip(&self.lse)
            .map(|(&a, &g)| (a - g).max(g - (a + ln_nq)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Outcome of pruning one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneResult {
    /// Kept token indices, strictly ascending.
    pub kept_indices: Vec<usize>,
    pub keep_count: usize,
    pub keep_ratio: f64,
    /// `a_(K) - a_(K+1)` over the sorted scores; `None` when every token is kept.
    pub margin: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub gap: f64,
    pub guaranteed_stable: bool,
    pub sets_equal: bool,
}

fn check_nonempty(s: &SimilarityMatrix) -> Result<()> {
    if s.n_query() == 0 || s.n_visual() == 0 {
        return Err(Error::EmptyMatrix);
    }
    Ok(())
}

/// `out[j] = max_t S(t, j)`.
pub fn maxsim_scores(s: &SimilarityMatrix) -> Result<Vec<f64>> {
    check_nonempty(s)?;
    let mut out = s.row(0).to_vec();
    for t in 1..s.n_query() {
        for (o, &x) in out.iter_mut().zip(s.row(t)) {
            if x > *o {
                *o = x;
            }
        }
    }
    Ok(out)
}

/// `out[j] = ln sum_t exp(S(t, j))`, shifted by the column max.
pub fn lse_scores(s: &SimilarityMatrix) -> Result<Vec<f64>> {
    let max = maxsim_scores(s)?;
    let mut acc = vec![0.0; s.n_visual()];
    for t in 0..s.n_query() {
        for ((a, &x), &m) in acc.iter_mut().zip(s.row(t)).zip(&max) {
            *a += (x - m).exp();
        }
    }
    Ok(max.iter().zip(&acc).map(|(m, a)| m + a.ln()).collect())
}

/// `max(1, round(rho * n_tokens))`, rounding half away from zero, capped at `n_tokens`.
pub fn keep_count(rho: f64, n_tokens: usize) -> Result<usize> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRatio(rho));
    }
    if n_tokens == 0 {
        return Err(Error::EmptyInput);
    }
    let k = (rho * n_tokens as f64).round() as usize;
    Ok(k.clamp(1, n_tokens))
}

/// Descending by score, lower index first among equal scores.
fn rank_cmp(scores: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// Indices sorted by descending score; ties keep the lower index first.
pub fn argsort_descending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(rank_cmp(scores));
    idx
}

/// Indices of the `k` largest scores in rank order (best first).
pub fn top_k_ranked(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(Error::KOutOfRange {
            k,
            len: scores.len(),
        });
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let cmp = rank_cmp(scores);
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, &cmp);
        idx.truncate(k);
    }
    idx.sort_by(&cmp);
    Ok(idx)
}

/// Indices of the `k` largest scores, returned in ascending index order.
pub fn select_topk_preserve_order(scores: &[f64], k: usize) -> Result<Vec<usize>> {
    let mut idx = top_k_ranked(scores, k)?;
    idx.sort_unstable();
    Ok(idx)
}

/// `k` distinct indices from `0..n_tokens`, uniform without replacement, ascending.
///
/// The generator is ChaCha8 seeded through `SeedableRng::seed_from_u64`,
/// and sampling uses `rand::seq::index::sample`; both are platform independent.
pub fn random_prune(n_tokens: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_prune_with(&mut rng, n_tokens, k)
}

/// [`random_prune`] driven by a caller-owned generator.
pub fn random_prune_with<R: rand::Rng + ?Sized>(
    rng: &mut R,
    n_tokens: usize,
    k: usize,
) -> Result<Vec<usize>> {
    if k == 0 || k > n_tokens {
        return Err(Error::KOutOfRange { k, len: n_tokens });
    }
    let mut idx = rand::seq::index::sample(rng, n_tokens, k).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Gap between the k-th and (k+1)-th largest entries.
fn boundary_gap(scores: &[f64], k: usize) -> f64 {
    let order = argsort_descending(scores);
    scores[order[k - 1]] - scores[order[k]]
}

/// Compares the top-k sets selected by max-sim and by log-sum-exp pooling.
///
/// A gap above `ln(n_query)` in the max-sim scores guarantees the two sets
/// coincide.
pub fn topk_stability_check(
    max_sim: &[f64],
    lse: &[f64],
    k: usize,
    n_query: usize,
) -> Result<StabilityReport> {
    if max_sim.len() != lse.len() {
        return Err(Error::LengthMismatch {
            left: max_sim.len(),
            right: lse.len(),
        });
    }
    if k == 0 || k >= max_sim.len() {
        return Err(Error::KOutOfRange {
            k,
            len: max_sim.len(),
        });
    }
    if n_query == 0 {
        return Err(Error::EmptyMatrix);
    }
    let gap = boundary_gap(max_sim, k);
    let by_max = select_topk_preserve_order(max_sim, k)?;
    let by_lse = select_topk_preserve_order(lse, k)?;
    Ok(StabilityReport {
        gap,
        guaranteed_stable: gap > (n_query as f64).ln(),
        sets_equal: by_max == by_lse,
    })
}

/// Prunes a single image given per-token scores.
pub fn prune_by_scores(scores: &[f64], rho: f64) -> Result<PruneResult> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    let k = keep_count(rho, scores.len())?;
    let kept = select_topk_preserve_order(scores, k)?;
    let margin = (k < scores.len()).then(|| boundary_gap(scores, k));
    Ok(PruneResult {
        kept_indices: kept,
        keep_count: k,
        keep_ratio: rho,
        margin,
    })
}

/// Max-sim scores of every visual token of `image` against the query rows.
pub fn image_scores(query: &EmbeddingMatrix, image: &EmbeddingMatrix) -> Result<Vec<f64>> {
    maxsim_scores(&similarity_matrix(query, image)?)
}

pub fn prune_image(
    query: &EmbeddingMatrix,
    image: &EmbeddingMatrix,
    rho: f64,
) -> Result<PruneResult> {
    prune_by_scores(&image_scores(query, image)?, rho)
}

/// Prunes every candidate image independently. Images are processed in
/// parallel; the result matches sequential execution.
pub fn prune_images(
    query: &EmbeddingMatrix,
    images: &[EmbeddingMatrix],
    rho: f64,
) -> Result<Vec<PruneResult>> {
    keep_count(rho, 1)?;
    images
        .par_iter()
        .map(|img| prune_image(query, img, rho))
        .collect()
}
