//! Single-token listwise scoring.
//!
//! Every candidate gets a one-symbol identifier (`A`, `B`, ...). A single
//! forward pass yields one logit per identifier and the ranking is the
//! descending argsort of those logits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::{argsort_descending, keep_count};

/// Size of the single-symbol identifier alphabet.
pub const MAX_CANDIDATES: usize = 26;

/// A bijection on `0..k`. `order[p]` is the candidate placed at position `p`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &i in &order {
            if i >= order.len() || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidPermutation(format!(
                    "{order:?} is not a bijection on 0..{}",
                    order.len()
                )));
            }
        }
        Ok(Self(order))
    }

    pub fn identity(k: usize) -> Self {
        Self((0..k).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (p, &i) in self.0.iter().enumerate() {
            inv[i] = p;
        }
        Self(inv)
    }

    /// 1-based position of every candidate, i.e. `ranks[i]` is where candidate `i` landed.
    pub fn ranks(&self) -> Vec<usize> {
        self.inverse().0.into_iter().map(|p| p + 1).collect()
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}

/// Candidates paired with their identifier symbols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList<T> {
    pub ids: Vec<T>,
    pub identifier_tokens: Vec<char>,
}

impl<T> CandidateList<T> {
    pub fn new(ids: Vec<T>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let identifier_tokens = assign_identifiers(ids.len())?;
        Ok(Self {
            ids,
            identifier_tokens,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Reorders the candidates by descending identifier logit.
    pub fn rerank(&self, logits: &[f64]) -> Result<Vec<&T>> {
        let pi = rank_from_logits(logits)?;
        let refs: Vec<&T> = self.ids.iter().collect();
        apply_permutation(&refs, &pi)
    }
}

/// Token counts of one listwise prompt before and after pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAccounting {
    pub n_text: usize,
    pub n_vis: usize,
    pub n_query: usize,
    pub rho: f64,
    pub n_rho: usize,
}

impl TokenAccounting {
    pub fn n_full(&self) -> usize {
        self.n_text + self.n_vis
    }
}

/// The first `k` uppercase Latin letters.
pub fn assign_identifiers(k: usize) -> Result<Vec<char>> {
    if k > MAX_CANDIDATES {
        return Err(Error::TooManyCandidates(k));
    }
    Ok((b'A'..).take(k).map(char::from).collect())
}

/// Descending argsort of identifier logits; equal logits keep retriever order.
pub fn rank_from_logits(logits: &[f64]) -> Result<Permutation> {
    if logits.is_empty() {
        return Err(Error::EmptyInput);
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(Permutation(argsort_descending(logits)))
}

/// `out[p] = items[pi[p]]`.
pub fn apply_permutation<T: Clone>(items: &[T], pi: &Permutation) -> Result<Vec<T>> {
    if items.len() != pi.len() {
        return Err(Error::LengthMismatch {
            left: items.len(),
            right: pi.len(),
        });
    }
    Ok(pi.0.iter().map(|&i| items[i].clone()).collect())
}

/// Counts prompt tokens with per-image keep counts `max(1, round(rho N_i))`.
pub fn token_accounting(
    n_text: usize,
    image_token_counts: &[usize],
    n_query: usize,
    rho: f64,
) -> Result<TokenAccounting> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRatio(rho));
    }
    if n_query > n_text {
        return Err(Error::InvalidParameter(format!(
            "n_query {n_query} exceeds n_text {n_text}"
        )));
    }
    let n_vis = image_token_counts.iter().sum();
    let kept = image_token_counts
        .iter()
        .map(|&n| keep_count(rho, n))
        .sum::<Result<usize>>()?;
    Ok(TokenAccounting {
        n_text,
        n_vis,
        n_query,
        rho,
        n_rho: n_text + kept,
    })
}
