use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use prunerank_core::cost_model::{cost_report, ArchParams, WorkloadSpec};
use prunerank_core::harness::{
    evaluate_metrics, run_attention_correlation, run_bound_verification, run_cost_sweep,
    run_pruning_comparison, BoundVerificationConfig, CorrelationConfig, CostSweepConfig,
    MetricsConfig, SyntheticConfig, Table,
};
use prunerank_core::pruning::prune_images;
use prunerank_core::EmbeddingMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Result of one subcommand before it is written to disk.
pub struct Outcome {
    pub config: Value,
    pub results: Value,
    pub tables: Vec<Table>,
    pub passed: bool,
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn verify_bounds(cfg: &BoundVerificationConfig, seed: u64) -> Result<Outcome> {
    let r = run_bound_verification(cfg, seed)?;
    Ok(Outcome {
        config: serde_json::to_value(cfg)?,
        results: json!({ "bound_verification": r }),
        tables: r.tables(),
        passed: r.passed,
    })
}

/// Real embeddings to prune, given as paths to `EmbeddingMatrix` JSON files.
/// Relative paths are resolved against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingInput {
    pub query: PathBuf,
    pub images: Vec<PathBuf>,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub synthetic: SyntheticConfig,
    pub keep_ratios: Vec<f64>,
    pub instances: usize,
    pub correlation: Option<CorrelationConfig>,
    pub embeddings: Option<EmbeddingInput>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            keep_ratios: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            instances: 5000,
            correlation: Some(CorrelationConfig::default()),
            embeddings: None,
        }
    }
}

fn read_matrix(path: &Path) -> Result<EmbeddingMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing embedding matrix {}", path.display()))
}

pub fn simulate(cfg: &SimulateConfig, seed: u64, base_dir: &Path) -> Result<Outcome> {
    let mut results = serde_json::Map::new();
    let mut tables = Vec::new();

    let cmp = run_pruning_comparison(&cfg.synthetic, &cfg.keep_ratios, cfg.instances, seed)?;
    tables.extend(cmp.tables());
    results.insert("pruning_comparison".into(), serde_json::to_value(&cmp)?);

    if let Some(c) = &cfg.correlation {
        let corr = run_attention_correlation(&cfg.synthetic, c, seed)?;
        tables.extend(corr.tables());
        results.insert("attention_correlation".into(), serde_json::to_value(&corr)?);
    }

    if let Some(e) = &cfg.embeddings {
        let query = read_matrix(&base_dir.join(&e.query))?;
        let images = e
            .images
            .iter()
            .map(|p| read_matrix(&base_dir.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let pruned = prune_images(&query, &images, e.rho)?;
        let mut t = Table::new(
            "prune_results",
            &["image", "tokens", "keep_count", "margin", "kept_indices"],
        );
        for (i, (img, r)) in images.iter().zip(&pruned).enumerate() {
            let kept: Vec<String> = r.kept_indices.iter().map(ToString::to_string).collect();
            t.push([
                i.to_string(),
                img.rows().to_string(),
                r.keep_count.to_string(),
                r.margin.map(|m| m.to_string()).unwrap_or_default(),
                kept.join(" "),
            ]);
        }
        tables.push(t);
        results.insert("prune_results".into(), serde_json::to_value(&pruned)?);
    }

    Ok(Outcome {
        config: serde_json::to_value(cfg)?,
        results: Value::Object(results),
        tables,
        // no verification tallies in this command
        passed: true,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModelConfig {
    pub arch: ArchParams,
    pub workload: WorkloadSpec,
    pub sweep: Option<CostSweepConfig>,
}

impl Default for CostModelConfig {
    fn default() -> Self {
        let sweep = CostSweepConfig::default();
        Self {
            arch: sweep.arch,
            workload: sweep.workload(0.3, 20),
            sweep: Some(sweep),
        }
    }
}

pub fn cost_model(cfg: &CostModelConfig) -> Result<Outcome> {
    let rep = cost_report(&cfg.workload, &cfg.arch)?;
    let mut t = Table::new(
        "cost_model",
        &[
            "f_base", "f_zip", "speedup", "f_score", "u_base", "n_full", "n_rho",
        ],
    );
    t.push([
        format!("{:e}", rep.f_base),
        format!("{:e}", rep.f_zip),
        format!("{:.6}", rep.speedup),
        format!("{:e}", rep.f_score),
        rep.u_base.to_string(),
        rep.lengths.n_full.to_string(),
        rep.lengths.n_rho.to_string(),
    ]);
    let mut tables = vec![t];
    let mut results = json!({
        "f_base": rep.f_base,
        "f_zip": rep.f_zip,
        "speedup": rep.speedup,
        "f_score": rep.f_score,
        "u_base": rep.u_base,
        "lengths": rep.lengths,
        "regime_estimates": rep.regime_estimates,
    });
    if let Some(s) = &cfg.sweep {
        let sweep = run_cost_sweep(s)?;
        tables.extend(sweep.tables());
        results["sweep"] = serde_json::to_value(&sweep)?;
    }
    Ok(Outcome {
        config: serde_json::to_value(cfg)?,
        results,
        tables,
        passed: true,
    })
}

pub fn metrics(path: Option<&Path>) -> Result<Outcome> {
    if path.is_none() {
        bail!("metrics needs --config with judged queries or values");
    }
    let cfg: MetricsConfig = load_config(path)?;
    let e = evaluate_metrics(&cfg)?;
    Ok(Outcome {
        config: serde_json::to_value(&cfg)?,
        results: serde_json::to_value(&e)?,
        tables: e.tables(),
        passed: true,
    })
}
