//! IR evaluation metrics with binary relevance.
//!
//! Positions are 1-based in everything user facing (ranks, mean rank,
//! failure buckets). nDCG uses gain 1 and discount `1 / log2(p + 1)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relevant set and system ranking for one query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawJudgment")]
pub struct QueryJudgment {
    relevant: BTreeSet<usize>,
    ranked: Vec<usize>,
}

#[derive(Deserialize)]
struct RawJudgment {
    relevant: BTreeSet<usize>,
    ranked: Vec<usize>,
}

impl TryFrom<RawJudgment> for QueryJudgment {
    type Error = Error;

    fn try_from(raw: RawJudgment) -> Result<Self> {
        Self::new(raw.relevant, raw.ranked)
    }
}

impl QueryJudgment {
    pub fn new(relevant: impl IntoIterator<Item = usize>, ranked: Vec<usize>) -> Result<Self> {
        let relevant: BTreeSet<usize> = relevant.into_iter().collect();
        if relevant.is_empty() {
            return Err(Error::EmptyRelevantSet);
        }
        let mut seen = BTreeSet::new();
        if !ranked.iter().all(|i| seen.insert(*i)) {
            return Err(Error::InvalidPermutation(format!(
                "ranking {ranked:?} has duplicate entries"
            )));
        }
        Ok(Self { relevant, ranked })
    }

    pub fn relevant(&self) -> &BTreeSet<usize> {
        &self.relevant
    }

    pub fn ranked(&self) -> &[usize] {
        &self.ranked
    }

    /// 1-based position of the best-ranked relevant item.
    pub fn best_rank(&self) -> Option<usize> {
        self.ranked
            .iter()
            .position(|i| self.relevant.contains(i))
            .map(|p| p + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_avg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureLabel {
    Success,
    /// Best relevant item at rank 2 or 3.
    NearMiss,
    /// Rank 4 or 5.
    ModerateMiss,
    /// Below rank 5.
    CatastrophicMiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureClass {
    pub label: FailureLabel,
    pub gt_best_rank: usize,
}

/// Ranking-quality summary over a set of queries. Miss percentages are
/// shares of the failed queries, `fail_pct` is a share of all queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSummary {
    pub queries: usize,
    pub p_at_1: f64,
    pub ndcg_at_5: f64,
    pub mean_rank: f64,
    pub fail_pct: f64,
    pub near_miss_pct: f64,
    pub moderate_miss_pct: f64,
    pub catastrophic_miss_pct: f64,
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::KOutOfRange { k, len: 0 });
    }
    Ok(())
}

/// `|G ∩ top_k| / |G|`; `k` past the end of the ranking means the whole list.
pub fn recall_at_k(j: &QueryJudgment, k: usize) -> Result<f64> {
    check_k(k)?;
    let hits = j
        .ranked
        .iter()
        .take(k)
        .filter(|i| j.relevant.contains(i))
        .count();
    Ok(hits as f64 / j.relevant.len() as f64)
}

/// Micro (pooled) and macro (mean of subset means) averages.
pub fn aggregate<S: AsRef<str>>(values_by_subset: &BTreeMap<S, Vec<f64>>) -> Result<Aggregate> {
    if values_by_subset.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut pooled = 0.0;
    let mut count = 0usize;
    let mut subset_means = 0.0;
    for (name, values) in values_by_subset {
        if values.is_empty() {
            return Err(Error::EmptySubset(name.as_ref().to_string()));
        }
        let sum: f64 = values.iter().sum();
        pooled += sum;
        count += values.len();
        subset_means += sum / values.len() as f64;
    }
    Ok(Aggregate {
        micro: pooled / count as f64,
        macro_avg: subset_means / values_by_subset.len() as f64,
    })
}

pub fn precision_at_1(j: &QueryJudgment) -> Result<f64> {
    let top = j.ranked.first().ok_or(Error::EmptyRanking)?;
    Ok(if j.relevant.contains(top) { 1.0 } else { 0.0 })
}

fn discount(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

pub fn ndcg_at_k(j: &QueryJudgment, k: usize) -> Result<f64> {
    check_k(k)?;
    let dcg: f64 = j
        .ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| j.relevant.contains(i))
        .map(|(p, _)| discount(p + 1))
        .sum();
    let ideal: f64 = (1..=k.min(j.relevant.len())).map(discount).sum();
    Ok(dcg / ideal)
}

/// Mean over queries of the best relevant rank (1-based).
pub fn mean_rank(judgments: &[QueryJudgment]) -> Result<f64> {
    if judgments.is_empty() {
        return Err(Error::EmptyInput);
    }
    let total = judgments
        .iter()
        .map(|j| j.best_rank().ok_or(Error::GroundTruthNotRanked))
        .sum::<Result<usize>>()?;
    Ok(total as f64 / judgments.len() as f64)
}

pub fn classify_failure(gt_best_rank: usize) -> Result<FailureClass> {
    let label = match gt_best_rank {
        0 => return Err(Error::InvalidRank(0)),
        1 => FailureLabel::Success,
        2 | 3 => FailureLabel::NearMiss,
        4 | 5 => FailureLabel::ModerateMiss,
        _ => FailureLabel::CatastrophicMiss,
    };
    Ok(FailureClass {
        label,
        gt_best_rank,
    })
}

/// P@1, nDCG@5, mean rank and the failure taxonomy over `judgments`.
pub fn failure_summary(judgments: &[QueryJudgment]) -> Result<FailureSummary> {
    let n = judgments.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut counts: BTreeMap<FailureLabel, usize> = BTreeMap::new();
    let mut p1 = 0.0;
    let mut ndcg = 0.0;
    for j in judgments {
        p1 += precision_at_1(j)?;
        ndcg += ndcg_at_k(j, 5)?;
        let rank = j.best_rank().ok_or(Error::GroundTruthNotRanked)?;
        *counts.entry(classify_failure(rank)?.label).or_default() += 1;
    }
    let failures = n - counts.get(&FailureLabel::Success).copied().unwrap_or(0);
    let share = |label| {
        if failures == 0 {
            0.0
        } else {
            100.0 * counts.get(&label).copied().unwrap_or(0) as f64 / failures as f64
        }
    };
    Ok(FailureSummary {
        queries: n,
        p_at_1: p1 / n as f64,
        ndcg_at_5: ndcg / n as f64,
        mean_rank: mean_rank(judgments)?,
        fail_pct: 100.0 * failures as f64 / n as f64,
        near_miss_pct: share(FailureLabel::NearMiss),
        moderate_miss_pct: share(FailureLabel::ModerateMiss),
        catastrophic_miss_pct: share(FailureLabel::CatastrophicMiss),
    })
}

/// 1-based ranks; tied values share the mean of the positions they span.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && x[idx[end]] == x[idx[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateConstant);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::TooFewCandidates {
            min: 2,
            actual: x.len(),
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn judge(rel: &[usize], ranked: &[usize]) -> QueryJudgment {
        QueryJudgment::new(rel.iter().copied(), ranked.to_vec()).unwrap()
    }

    #[test]
    fn recall_examples() {
        assert_eq!(recall_at_k(&judge(&[3], &[3, 1, 2]), 1).unwrap(), 1.0);
        assert_eq!(
            recall_at_k(&judge(&[1, 4], &[1, 2, 3, 4, 5]), 3).unwrap(),
            0.5
        );
        assert_eq!(recall_at_k(&judge(&[1, 4], &[4, 1, 2]), 50).unwrap(), 1.0);
        assert!(recall_at_k(&judge(&[1], &[1]), 0).is_err());
        assert_eq!(
            QueryJudgment::new([], vec![1, 2]),
            Err(Error::EmptyRelevantSet)
        );
        assert!(QueryJudgment::new([1], vec![1, 1]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let mut m = BTreeMap::new();
        m.insert("X", vec![1.0]);
        m.insert("Y", vec![0.0, 0.0]);
        let a = aggregate(&m).unwrap();
        assert!((a.micro - 1.0 / 3.0).abs() < 1e-15 && a.macro_avg == 0.5);

        let mut one = BTreeMap::new();
        one.insert("only", vec![0.2, 0.9, 0.4]);
        let a = aggregate(&one).unwrap();
        assert_eq!(a.micro, a.macro_avg);

        let mut empty = BTreeMap::new();
        empty.insert("e".to_string(), vec![]);
        assert_eq!(aggregate(&empty), Err(Error::EmptySubset("e".into())));
    }

    #[test]
    fn aggregate_serializes_macro_key() {
        let js = serde_json::to_value(Aggregate {
            micro: 1.0,
            macro_avg: 2.0,
        })
        .unwrap();
        assert_eq!(js, serde_json::json!({"micro": 1.0, "macro": 2.0}));
    }

    #[test]
    fn precision_examples() {
        assert_eq!(precision_at_1(&judge(&[2], &[2, 0])).unwrap(), 1.0);
        assert_eq!(precision_at_1(&judge(&[2], &[0, 2])).unwrap(), 0.0);
        assert_eq!(precision_at_1(&judge(&[2], &[])), Err(Error::EmptyRanking));
    }

    #[test]
    fn ndcg_examples() {
        assert_eq!(ndcg_at_k(&judge(&[7], &[7, 1, 2]), 5).unwrap(), 1.0);
        let second = ndcg_at_k(&judge(&[7], &[1, 7, 2]), 5).unwrap();
        assert!((second - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert!((second - 0.630_93).abs() < 1e-5);
        assert_eq!(
            ndcg_at_k(&judge(&[7], &[1, 2, 3, 4, 5, 7]), 5).unwrap(),
            0.0
        );
    }

    #[test]
    fn mean_rank_examples() {
        assert_eq!(mean_rank(&[judge(&[0], &[0, 1])]).unwrap(), 1.0);
        let two = [judge(&[5], &[1, 5, 2]), judge(&[9], &[1, 2, 3, 9])];
        assert_eq!(mean_rank(&two).unwrap(), 3.0);
        let multi = judge(&[10, 20], &[1, 2, 10, 3, 4, 5, 20]);
        assert_eq!(multi.best_rank(), Some(3));
        assert_eq!(
            mean_rank(&[judge(&[4], &[1, 2])]),
            Err(Error::GroundTruthNotRanked)
        );
    }

    #[test]
    fn failure_classes() {
        let label = |r| classify_failure(r).unwrap().label;
        assert_eq!(label(1), FailureLabel::Success);
        assert_eq!(label(2), FailureLabel::NearMiss);
        assert_eq!(label(3), FailureLabel::NearMiss);
        assert_eq!(label(4), FailureLabel::ModerateMiss);
        assert_eq!(label(5), FailureLabel::ModerateMiss);
        assert_eq!(label(6), FailureLabel::CatastrophicMiss);
        assert!(classify_failure(0).is_err());
    }

    #[test]
    fn summary_fail_pct_complements_p_at_1() {
        let qs = [
            judge(&[0], &[0, 1, 2, 3, 4, 5, 6]),
            judge(&[1], &[0, 1, 2, 3, 4, 5, 6]),
            judge(&[4], &[0, 1, 2, 3, 4, 5, 6]),
            judge(&[6], &[0, 1, 2, 3, 4, 5, 6]),
        ];
        let s = failure_summary(&qs).unwrap();
        assert_eq!(s.p_at_1, 0.25);
        assert!((s.fail_pct - (1.0 - s.p_at_1) * 100.0).abs() < 1e-12);
        assert!(
            (s.near_miss_pct + s.moderate_miss_pct + s.catastrophic_miss_pct - 100.0).abs() < 1e-12
        );
        assert_eq!(s.mean_rank, (1 + 2 + 5 + 7) as f64 / 4.0);
    }

    #[test]
    fn spearman_examples() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert_eq!(spearman(&[0.3, -1.0, 2.5], &[0.3, -1.0, 2.5]).unwrap(), 1.0);
        assert_eq!(
            average_ranks(&[1.0, 2.0, 2.0, 3.0]),
            vec![1.0, 2.5, 2.5, 4.0]
        );
        assert_eq!(
            spearman(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::DegenerateConstant)
        );
        assert!(spearman(&[1.0, 2.0], &[1.0]).is_err());
    }
}
