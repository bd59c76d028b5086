//! Single-layer softmax attention used as a brute-force oracle.
//!
//! The pooled output `c = sum_j alpha_j v_j` is compared against the pruned,
//! renormalized output `c'` over a kept set `S`. With tail mass
//! `eps = sum_{j not in S} alpha_j` and `V_max` the largest value-row norm,
//! `|c - c'| <= 2 eps V_max`. When the weights are a softmax of scores `g`
//! and `S` is the top-k under `g`, the tail mass itself is at most
//! `((n - k) / k) exp(-delta)` with `delta` the boundary gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm, EmbeddingMatrix, RealVector};
use crate::pruning::top_k_ranked;

/// Absolute slack used by every bound comparison.
pub const BOUND_SLACK: f64 = 1e-9;

/// Tail mass at or above `1 - MASS_EPS` is rejected.
pub const MASS_EPS: f64 = 1e-12;

/// The constant in `|c - c'| <= 2 eps V_max`.
pub const PRUNING_BOUND_FACTOR: f64 = 2.0;

/// A probability vector: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AttentionWeights(Vec<f64>);

impl AttentionWeights {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::EmptyInput);
        }
        if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
            return Err(Error::InvalidParameter(
                "attention weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = alpha.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "attention weights sum to {total}, expected 1"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for AttentionWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AttentionWeights> for Vec<f64> {
    fn from(w: AttentionWeights) -> Self {
        w.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedOutput {
    pub c_prime: RealVector,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneErrorReport {
    pub error_norm: f64,
    pub tail_mass: f64,
    pub v_max: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailGapReport {
    pub epsilon: f64,
    pub delta: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Max-shifted softmax.
pub fn softmax(scores: &[f64]) -> Result<AttentionWeights> {
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    if scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    Ok(AttentionWeights(e.into_iter().map(|x| x / z).collect()))
}

fn check_rows(alpha: &AttentionWeights, v: &EmbeddingMatrix) -> Result<()> {
    if alpha.len() != v.rows() {
        return Err(Error::DimensionMismatch {
            expected: v.rows(),
            actual: alpha.len(),
        });
    }
    if v.dim() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// `c = sum_j alpha_j v_j`.
pub fn attention_output(alpha: &AttentionWeights, v: &EmbeddingMatrix) -> Result<RealVector> {
    check_rows(alpha, v)?;
    let mut c = vec![0.0; v.dim()];
    for (&a, row) in alpha.as_slice().iter().zip(v.iter_rows()) {
        for (ci, x) in c.iter_mut().zip(row) {
            *ci += a * x;
        }
    }
    RealVector::new(c)
}

/// Renormalized attention output restricted to `kept`, together with the
/// tail mass that was dropped.
pub fn pruned_attention_output(
    alpha: &AttentionWeights,
    v: &EmbeddingMatrix,
    kept: &[usize],
) -> Result<PrunedOutput> {
    check_rows(alpha, v)?;
    if kept.is_empty() {
        return Err(Error::AllMassPruned(1.0));
    }
    let mut in_kept = vec![false; alpha.len()];
    for &j in kept {
        if j >= alpha.len() {
            return Err(Error::DimensionMismatch {
                expected: alpha.len(),
                actual: j + 1,
            });
        }
        in_kept[j] = true;
    }
    let a = alpha.as_slice();
    let tail_mass: f64 = a
        .iter()
        .zip(&in_kept)
        .filter(|(_, &k)| !k)
        .map(|(x, _)| x)
        .sum();
    if tail_mass >= 1.0 - MASS_EPS {
        return Err(Error::AllMassPruned(tail_mass));
    }
    let scale = 1.0 / (1.0 - tail_mass);
    let mut c = vec![0.0; v.dim()];
    for (j, row) in v.iter_rows().enumerate().filter(|(j, _)| in_kept[*j]) {
        let w = a[j] * scale;
        for (ci, x) in c.iter_mut().zip(row) {
            *ci += w * x;
        }
    }
    Ok(PrunedOutput {
        c_prime: RealVector::new(c)?,
        tail_mass,
    })
}

/// Measures `|c - c'|` against `2 eps V_max`.
pub fn check_pruning_error_bound(
    alpha: &AttentionWeights,
    v: &EmbeddingMatrix,
    kept: &[usize],
) -> Result<PruneErrorReport> {
    check_pruning_error_bound_with_factor(alpha, v, kept, PRUNING_BOUND_FACTOR)
}

/// Same as [`check_pruning_error_bound`] with the constant in front of
/// `eps V_max` replaced. Used by the mutation self-test.
pub fn check_pruning_error_bound_with_factor(
    alpha: &AttentionWeights,
    v: &EmbeddingMatrix,
    kept: &[usize],
    factor: f64,
) -> Result<PruneErrorReport> {
    let c = attention_output(alpha, v)?;
    let pruned = pruned_attention_output(alpha, v, kept)?;
    let diff: Vec<f64> = c
        .iter()
        .zip(pruned.c_prime.iter())
        .map(|(x, y)| x - y)
        .collect();
    let error_norm = norm(&diff);
    let v_max = v.max_row_norm();
    let bound = factor * pruned.tail_mass * v_max;
    Ok(PruneErrorReport {
        error_norm,
        tail_mass: pruned.tail_mass,
        v_max,
        bound,
        holds: error_norm <= bound + BOUND_SLACK,
    })
}

/// Softmax tail mass outside the top-k of `g` versus `((n - k) / k) exp(-delta)`.
pub fn tail_gap_bound_check(g: &[f64], k: usize) -> Result<TailGapReport> {
    let n = g.len();
    if k == 0 || k >= n {
        return Err(Error::KOutOfRange { k, len: n });
    }
    let ranked = top_k_ranked(g, n)?;
    let alpha = softmax(g)?;
    let a = alpha.as_slice();
    let epsilon: f64 = ranked[k..].iter().map(|&j| a[j]).sum();
    let delta = g[ranked[k - 1]] - g[ranked[k]];
    let bound = (n - k) as f64 / k as f64 * (-delta).exp();
    Ok(TailGapReport {
        epsilon,
        delta,
        bound,
        holds: epsilon <= bound + BOUND_SLACK,
    })
}

/// Head-averaged attention row at `position`: `b_j = (1/H) sum_h A^h[position, j]`.
pub fn attention_mass_per_token(heads: &[EmbeddingMatrix], position: usize) -> Result<Vec<f64>> {
    let first = heads.first().ok_or(Error::EmptyInput)?;
    for h in heads {
        if h.rows() != first.rows() || h.dim() != first.dim() {
            return Err(Error::ShapeMismatch(format!(
                "head shapes {}x{} and {}x{}",
                first.rows(),
                first.dim(),
                h.rows(),
                h.dim()
            )));
        }
    }
    if position >= first.rows() {
        return Err(Error::ShapeMismatch(format!(
            "position {position} outside {} rows",
            first.rows()
        )));
    }
    let mut b = vec![0.0; first.dim()];
    for h in heads {
        for (bj, x) in b.iter_mut().zip(h.row(position)) {
            *bj += x;
        }
    }
    let inv = 1.0 / heads.len() as f64;
    b.iter_mut().for_each(|x| *x *= inv);
    Ok(b)
}
