//! Metric tables over per-subset query judgments.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Table;
use crate::error::{Error, Result};
use crate::metrics::{
    aggregate, failure_summary, ndcg_at_k, recall_at_k, Aggregate, FailureSummary, QueryJudgment,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Subset (domain) name to its judged queries.
    pub subsets: BTreeMap<String, Vec<QueryJudgment>>,
    pub recall_k: Vec<usize>,
    pub ndcg_k: usize,
    /// Include P@1 / mean rank / failure buckets per subset. Requires every
    /// ranking to contain at least one relevant item.
    pub failure_analysis: bool,
    /// Precomputed per-query (or per-subset) scores to aggregate as-is.
    pub values: BTreeMap<String, Vec<f64>>,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            subsets: BTreeMap::new(),
            recall_k: vec![1, 3, 5],
            ndcg_k: 5,
            failure_analysis: false,
            values: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallRow {
    pub k: usize,
    pub per_subset: BTreeMap<String, f64>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsEvaluation {
    pub recall: Vec<RecallRow>,
    pub ndcg_k: usize,
    pub ndcg_per_subset: BTreeMap<String, f64>,
    pub ndcg: Option<Aggregate>,
    pub failure: BTreeMap<String, FailureSummary>,
    pub values: Option<Aggregate>,
}

impl MetricsEvaluation {
    pub fn tables(&self) -> Vec<Table> {
        let mut tables = Vec::new();
        if !self.recall.is_empty() {
            let mut t = Table::new("recall", &["k", "subset", "recall"]);
            for row in &self.recall {
                for (name, v) in &row.per_subset {
                    t.push([row.k.to_string(), name.clone(), format!("{v:.6}")]);
                }
                t.push([
                    row.k.to_string(),
                    "micro".into(),
                    format!("{:.6}", row.aggregate.micro),
                ]);
                t.push([
                    row.k.to_string(),
                    "macro".into(),
                    format!("{:.6}", row.aggregate.macro_avg),
                ]);
            }
            tables.push(t);
        }
        if let Some(agg) = &self.ndcg {
            let mut t = Table::new("ndcg", &["k", "subset", "ndcg"]);
            let k = self.ndcg_k.to_string();
            for (name, v) in &self.ndcg_per_subset {
                t.push([k.clone(), name.clone(), format!("{v:.6}")]);
            }
            t.push([k.clone(), "micro".into(), format!("{:.6}", agg.micro)]);
            t.push([k, "macro".into(), format!("{:.6}", agg.macro_avg)]);
            tables.push(t);
        }
        if !self.failure.is_empty() {
            let mut t = Table::new(
                "failure_analysis",
                &[
                    "subset",
                    "queries",
                    "p_at_1",
                    "ndcg_at_5",
                    "mean_rank",
                    "fail_pct",
                    "near_miss_pct",
                    "moderate_miss_pct",
                    "catastrophic_miss_pct",
                ],
            );
            for (name, f) in &self.failure {
                t.push([
                    name.clone(),
                    f.queries.to_string(),
                    format!("{:.6}", f.p_at_1),
                    format!("{:.6}", f.ndcg_at_5),
                    format!("{:.6}", f.mean_rank),
                    format!("{:.4}", f.fail_pct),
                    format!("{:.4}", f.near_miss_pct),
                    format!("{:.4}", f.moderate_miss_pct),
                    format!("{:.4}", f.catastrophic_miss_pct),
                ]);
            }
            tables.push(t);
        }
        if let Some(agg) = &self.values {
            let mut t = Table::new("values_aggregate", &["micro", "macro"]);
            t.push([format!("{:.6}", agg.micro), format!("{:.6}", agg.macro_avg)]);
            tables.push(t);
        }
        tables
    }
}

fn per_query(
    subsets: &BTreeMap<String, Vec<QueryJudgment>>,
    f: impl Fn(&QueryJudgment) -> Result<f64>,
) -> Result<BTreeMap<String, Vec<f64>>> {
    subsets
        .iter()
        .map(|(name, js)| Ok((name.clone(), js.iter().map(&f).collect::<Result<Vec<_>>>()?)))
        .collect()
}

fn means(values: &BTreeMap<String, Vec<f64>>) -> BTreeMap<String, f64> {
    values
        .iter()
        .map(|(n, v)| (n.clone(), v.iter().sum::<f64>() / v.len() as f64))
        .collect()
}

/// Recall@k rows, nDCG and optional failure buckets per subset, each with
/// micro and macro aggregates; plus the aggregate of `values` if given.
pub fn evaluate_metrics(cfg: &MetricsConfig) -> Result<MetricsEvaluation> {
    if cfg.subsets.is_empty() && cfg.values.is_empty() {
        return Err(Error::ConfigInvalid(
            "neither subsets nor values given".into(),
        ));
    }
    let mut out = MetricsEvaluation {
        recall: Vec::new(),
        ndcg_k: cfg.ndcg_k,
        ndcg_per_subset: BTreeMap::new(),
        ndcg: None,
        failure: BTreeMap::new(),
        values: None,
    };
    if !cfg.subsets.is_empty() {
        for &k in &cfg.recall_k {
            let v = per_query(&cfg.subsets, |j| recall_at_k(j, k))?;
            out.recall.push(RecallRow {
                k,
                per_subset: means(&v),
                aggregate: aggregate(&v)?,
            });
        }
        let v = per_query(&cfg.subsets, |j| ndcg_at_k(j, cfg.ndcg_k))?;
        out.ndcg_per_subset = means(&v);
        out.ndcg = Some(aggregate(&v)?);
        if cfg.failure_analysis {
            for (name, js) in &cfg.subsets {
                out.failure.insert(name.clone(), failure_summary(js)?);
            }
        }
    }
    if !cfg.values.is_empty() {
        out.values = Some(aggregate(&cfg.values)?);
    }
    Ok(out)
}
