//! Ranking objectives on first-step identifier logits.
//!
//! | Loss | Shape | Gradient |
//! |------|-------|----------|
//! | [`weighted_ranknet_loss`] | pairwise, `w_ij = 1/(r_i + r_j)` | closed form, sigmoid of differences |
//! | [`soft_rank_loss`] | listwise cross-entropy vs geometric target | `softmax(s) - q` |
//! | [`nll_loss`] | sequence negative log-likelihood | n/a (no model) |
//!
//! Gradients are taken with respect to the logits `s` only.
//! [`finite_difference_gradcheck`] validates them by central differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::listwise::Permutation;

/// Target ranks, 1 = most relevant. A permutation of `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct TargetRanking(Vec<usize>);

impl TargetRanking {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let m = ranks.len();
        let mut seen = vec![false; m];
        for &r in &ranks {
            if r == 0 || r > m || std::mem::replace(&mut seen[r - 1], true) {
                return Err(Error::InvalidPermutation(format!(
                    "ranks {ranks:?} are not a permutation of 1..={m}"
                )));
            }
        }
        Ok(Self(ranks))
    }

    /// Ranks implied by an ordering (best first).
    pub fn from_order(order: &Permutation) -> Self {
        Self(order.ranks())
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<usize>> for TargetRanking {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<TargetRanking> for Vec<usize> {
    fn from(t: TargetRanking) -> Self {
        t.0
    }
}

/// Geometric-decay soft labels over the candidates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftTarget {
    pub q: Vec<f64>,
    pub gamma: f64,
}

/// Loss value plus its gradient with respect to each logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `1 / (1 + e^{-x})` without overflow.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Log-probabilities of `softmax(s)`.
pub fn log_softmax(s: &[f64]) -> Vec<f64> {
    let m = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + s.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    s.iter().map(|x| x - lse).collect()
}

fn check_logits(s: &[f64]) -> Result<()> {
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// `sum_{r_i < r_j} w_ij ln(1 + exp(s_j - s_i))` with `w_ij = 1 / (r_i + r_j)`.
pub fn weighted_ranknet_loss(s: &[f64], target: &TargetRanking) -> Result<LossValue> {
    let m = s.len();
    if m != target.len() {
        return Err(Error::LengthMismatch {
            left: m,
            right: target.len(),
        });
    }
    if m < 2 {
        return Err(Error::TooFewCandidates { min: 2, actual: m });
    }
    check_logits(s)?;
    let r = target.ranks();
    let mut value = 0.0;
    let mut gradient = vec![0.0; m];
    for i in 0..m {
        for j in 0..m {
            if r[i] >= r[j] {
                continue;
            }
            let w = 1.0 / (r[i] + r[j]) as f64;
            let diff = s[j] - s[i];
            value += w * softplus(diff);
            let g = w * sigmoid(diff);
            gradient[j] += g;
            gradient[i] -= g;
        }
    }
    Ok(LossValue { value, gradient })
}

/// Candidate at teacher position `k` (0-based) receives `gamma^k / sum_l gamma^l`.
pub fn geometric_target(teacher_order: &Permutation, gamma: f64) -> Result<SoftTarget> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidGamma(gamma));
    }
    let m = teacher_order.len();
    if m == 0 {
        return Err(Error::EmptyInput);
    }
    let powers: Vec<f64> = (0..m as i32).map(|k| gamma.powi(k)).collect();
    let z: f64 = powers.iter().sum();
    let mut q = vec![0.0; m];
    for (&cand, p) in teacher_order.order().iter().zip(&powers) {
        q[cand] = p / z;
    }
    Ok(SoftTarget { q, gamma })
}

/// `-sum_i q_i ln softmax(s)_i`; gradient `softmax(s) - q`.
pub fn soft_rank_loss(s: &[f64], target: &SoftTarget) -> Result<LossValue> {
    if s.len() != target.q.len() {
        return Err(Error::LengthMismatch {
            left: s.len(),
            right: target.q.len(),
        });
    }
    if s.is_empty() {
        return Err(Error::EmptyInput);
    }
    check_logits(s)?;
    let logp = log_softmax(s);
    let value = -target
        .q
        .iter()
        .zip(&logp)
        .map(|(q, lp)| q * lp)
        .sum::<f64>();
    let gradient = logp
        .iter()
        .zip(&target.q)
        .map(|(lp, q)| lp.exp() - q)
        .collect();
    Ok(LossValue { value, gradient })
}

/// `-sum ln p` over per-step target probabilities.
pub fn nll_loss(step_probs: &[f64]) -> Result<f64> {
    step_probs.iter().try_fold(0.0, |acc, &p| {
        if p > 0.0 && p <= 1.0 {
            Ok(acc - p.ln())
        } else {
            Err(Error::InvalidProbability(p))
        }
    })
}

/// `base + lambda * aux`.
pub fn stage_loss(base: f64, aux: &LossValue, lambda: f64) -> f64 {
    base + lambda * aux.value
}

/// Largest `|analytic - numeric| / max(1, |numeric|)` over coordinates, with
/// the numeric gradient from central differences of step `epsilon`.
pub fn finite_difference_gradcheck<F>(loss: F, s: &[f64], epsilon: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<LossValue>,
{
    if !(1e-8..=1e-3).contains(&epsilon) {
        return Err(Error::InvalidStep(epsilon));
    }
    let analytic = loss(s)?.gradient;
    if analytic.len() != s.len() {
        return Err(Error::LengthMismatch {
            left: analytic.len(),
            right: s.len(),
        });
    }
    let mut probe = s.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..s.len() {
        probe[i] = s[i] + epsilon;
        let up = loss(&probe)?.value;
        probe[i] = s[i] - epsilon;
        let down = loss(&probe)?.value;
        probe[i] = s[i];
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}
