//! Max-sim (text-to-image) pruning against uniform random pruning on the
//! planted-relevance family, plus the similarity/attention correlation probe.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synth::{generate_instance, SyntheticConfig};
use super::{derive_seed, trial_rng, Table};
use crate::attention::{attention_mass_per_token, softmax};
use crate::error::{Error, Result};
use crate::linalg::EmbeddingMatrix;
use crate::metrics::spearman;
use crate::pruning::{image_scores, keep_count, select_topk_preserve_order};

/// Stream offset separating the random-pruning generator from instance generation.
const RANDOM_STREAM: u64 = 0x5255_4e44;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetentionRow {
    pub keep_ratio: f64,
    /// Fraction of planted tokens kept by max-sim pruning.
    pub t2i_retention: f64,
    pub random_retention: f64,
    /// Mean of `K_i / N_i` over the relevant images.
    pub mean_kept_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PruningComparison {
    pub instances: usize,
    pub rows: Vec<RetentionRow>,
    /// t2i retention >= random retention at every ratio.
    pub t2i_dominates: bool,
    /// Both retention columns are nondecreasing in the ratio.
    pub monotone: bool,
}

impl PruningComparison {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "pruning_comparison",
            &[
                "keep_ratio",
                "strategy",
                "retention",
                "mean_kept_fraction",
                "instances",
            ],
        );
        for r in &self.rows {
            for (name, val) in [("t2i", r.t2i_retention), ("random", r.random_retention)] {
                t.push([
                    r.keep_ratio.to_string(),
                    name.to_string(),
                    format!("{val:.6}"),
                    format!("{:.6}", r.mean_kept_fraction),
                    self.instances.to_string(),
                ]);
            }
        }
        vec![t]
    }
}

struct InstanceOutcome {
    t2i: Vec<f64>,
    random: Vec<f64>,
    kept_fraction: Vec<f64>,
}

fn retained(kept_sorted: &[usize], planted: &[usize]) -> f64 {
    let hits = planted
        .iter()
        .filter(|j| kept_sorted.binary_search(j).is_ok())
        .count();
    hits as f64 / planted.len() as f64
}

fn run_instance(
    base: &SyntheticConfig,
    seed: u64,
    index: u64,
    ratios: &[f64],
) -> Result<InstanceOutcome> {
    let cfg = SyntheticConfig {
        seed: derive_seed(seed, index),
        ..base.clone()
    };
    let inst = generate_instance(&cfg)?;
    let image = &inst.images[inst.relevant_image];
    let planted = inst.planted_in_relevant();
    let n = image.rows();
    let scores = image_scores(&inst.query, image)?;

    // One shuffled order per instance; keeping its first K entries is a
    // uniform K-subset for every K, and nested across ratios.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut trial_rng(seed ^ RANDOM_STREAM, index));
    let mut position = vec![0; n];
    for (p, &j) in order.iter().enumerate() {
        position[j] = p;
    }

    let mut out = InstanceOutcome {
        t2i: Vec::with_capacity(ratios.len()),
        random: Vec::with_capacity(ratios.len()),
        kept_fraction: Vec::with_capacity(ratios.len()),
    };
    for &rho in ratios {
        let k = keep_count(rho, n)?;
        let kept = select_topk_preserve_order(&scores, k)?;
        out.t2i.push(retained(&kept, planted));
        let hits = planted.iter().filter(|&&j| position[j] < k).count();
        out.random.push(hits as f64 / planted.len() as f64);
        out.kept_fraction.push(k as f64 / n as f64);
    }
    Ok(out)
}

fn nondecreasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[0] <= w[1])
}

/// Retention of the planted tokens in the relevant image under both
/// strategies, averaged over `instances` generated instances.
///
/// Instance `i` is generated from `derive_seed(seed, i)`; `base.seed` is ignored.
/// Rows follow the order of `keep_ratios`; the monotone flag is evaluated
/// after sorting by ratio.
pub fn run_pruning_comparison(
    base: &SyntheticConfig,
    keep_ratios: &[f64],
    instances: usize,
    seed: u64,
) -> Result<PruningComparison> {
    base.validate()?;
    if keep_ratios.is_empty() {
        return Err(Error::ConfigInvalid("keep_ratios is empty".into()));
    }
    if let Some(&bad) = keep_ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::InvalidRatio(bad));
    }
    if instances == 0 {
        return Err(Error::ConfigInvalid("instances must be >= 1".into()));
    }

    let outcomes: Vec<InstanceOutcome> = (0..instances as u64)
        .into_par_iter()
        .map(|i| run_instance(base, seed, i, keep_ratios))
        .collect::<Result<_>>()?;

    let inv = 1.0 / instances as f64;
    let rows: Vec<RetentionRow> = keep_ratios
        .iter()
        .enumerate()
        .map(|(r, &rho)| RetentionRow {
            keep_ratio: rho,
            t2i_retention: outcomes.iter().map(|o| o.t2i[r]).sum::<f64>() * inv,
            random_retention: outcomes.iter().map(|o| o.random[r]).sum::<f64>() * inv,
            mean_kept_fraction: outcomes.iter().map(|o| o.kept_fraction[r]).sum::<f64>() * inv,
        })
        .collect();

    let mut sorted: Vec<&RetentionRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.keep_ratio.total_cmp(&b.keep_ratio));
    let monotone = nondecreasing(sorted.iter().map(|r| r.t2i_retention))
        && nondecreasing(sorted.iter().map(|r| r.random_retention));
    let t2i_dominates = rows.iter().all(|r| r.t2i_retention >= r.random_retention);
    Ok(PruningComparison {
        instances,
        rows,
        t2i_dominates,
        monotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    pub trials: usize,
    pub n_heads: usize,
    /// Multiplier on the max-sim score inside each head's attention logits.
    pub temperature: f64,
    /// Standard deviation of per-head logit noise.
    pub head_noise: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            trials: 200,
            n_heads: 8,
            temperature: 4.0,
            head_noise: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionCorrelation {
    pub trials: usize,
    pub mean_spearman: f64,
    pub min_spearman: f64,
    pub max_spearman: f64,
}

impl AttentionCorrelation {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "attention_correlation",
            &["trials", "mean_spearman", "min_spearman", "max_spearman"],
        );
        t.push([
            self.trials.to_string(),
            format!("{:.6}", self.mean_spearman),
            format!("{:.6}", self.min_spearman),
            format!("{:.6}", self.max_spearman),
        ]);
        vec![t]
    }
}

/// Spearman correlation between max-sim scores and head-averaged attention
/// mass on synthetic heads whose logits are `temperature * score + noise`.
/// Descriptive only; there is no target value.
pub fn run_attention_correlation(
    base: &SyntheticConfig,
    cfg: &CorrelationConfig,
    seed: u64,
) -> Result<AttentionCorrelation> {
    base.validate()?;
    if cfg.trials == 0 || cfg.n_heads == 0 {
        return Err(Error::ConfigInvalid(
            "trials and n_heads must be >= 1".into(),
        ));
    }
    if !(cfg.temperature.is_finite() && cfg.head_noise.is_finite() && cfg.head_noise >= 0.0) {
        return Err(Error::ConfigInvalid(
            "temperature and head_noise must be finite, head_noise >= 0".into(),
        ));
    }
    let rhos: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| {
            let inst = generate_instance(&SyntheticConfig {
                seed: derive_seed(seed, i),
                ..base.clone()
            })?;
            let scores = image_scores(&inst.query, &inst.images[inst.relevant_image])?;
            let mut rng = trial_rng(seed ^ RANDOM_STREAM, i);
            let heads = (0..cfg.n_heads)
                .map(|_| {
                    let logits: Vec<f64> = scores
                        .iter()
                        .map(|s| {
                            let z: f64 = rng.sample(StandardNormal);
                            cfg.temperature * s + cfg.head_noise * z
                        })
                        .collect();
                    let row = softmax(&logits)?;
                    EmbeddingMatrix::new(1, scores.len(), row.as_slice().to_vec())
                })
                .collect::<Result<Vec<_>>>()?;
            let mass = attention_mass_per_token(&heads, 0)?;
            spearman(&scores, &mass)
        })
        .collect::<Result<_>>()?;
    Ok(AttentionCorrelation {
        trials: cfg.trials,
        mean_spearman: rhos.iter().sum::<f64>() / rhos.len() as f64,
        min_spearman: rhos.iter().copied().fold(f64::INFINITY, f64::min),
        max_spearman: rhos.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::TokenRange;

    fn small() -> SyntheticConfig {
        SyntheticConfig {
            n_images: 2,
            tokens_per_image: TokenRange { min: 32, max: 96 },
            embed_dim: 32,
            n_query_tokens: 4,
            ..Default::default()
        }
    }

    #[test]
    fn full_ratio_keeps_everything() {
        let r = run_pruning_comparison(&small(), &[1.0], 50, 3).unwrap();
        assert_eq!(r.rows[0].t2i_retention, 1.0);
        assert_eq!(r.rows[0].random_retention, 1.0);
        assert_eq!(r.rows[0].mean_kept_fraction, 1.0);
    }

    #[test]
    fn half_ratio_zero_noise() {
        let r = run_pruning_comparison(&small(), &[0.5], 2000, 9).unwrap();
        let row = &r.rows[0];
        assert_eq!(row.t2i_retention, 1.0);
        assert!(
            (row.random_retention - 0.5).abs() <= 0.03,
            "{}",
            row.random_retention
        );
    }

    #[test]
    fn sweep_is_monotone_and_t2i_dominates() {
        let ratios = [0.1, 0.3, 0.5, 0.7, 0.9];
        let r = run_pruning_comparison(&small(), &ratios, 1000, 1).unwrap();
        assert!(r.monotone && r.t2i_dominates);
        let t2i: Vec<f64> = r.rows.iter().map(|x| x.t2i_retention).collect();
        assert_eq!(t2i, vec![1.0; 5]);
    }

    #[test]
    fn invariant_to_thread_count() {
        let ratios = [0.2, 0.6];
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let a = one.install(|| run_pruning_comparison(&small(), &ratios, 200, 4).unwrap());
        let b = run_pruning_comparison(&small(), &ratios, 200, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_ratios() {
        assert!(matches!(
            run_pruning_comparison(&small(), &[0.0], 10, 0),
            Err(Error::InvalidRatio(_))
        ));
        assert!(run_pruning_comparison(&small(), &[], 10, 0).is_err());
    }

    #[test]
    fn correlation_is_positive_and_reproducible() {
        let cfg = CorrelationConfig {
            trials: 20,
            ..Default::default()
        };
        let a = run_attention_correlation(&small(), &cfg, 2).unwrap();
        assert_eq!(a, run_attention_correlation(&small(), &cfg, 2).unwrap());
        assert!(a.mean_spearman > 0.0);
        assert!(a.min_spearman <= a.mean_spearman && a.mean_spearman <= a.max_spearman);
    }
}
