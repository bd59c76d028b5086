//! FLOPs grid over keep ratios and candidate counts.

use serde::{Deserialize, Serialize};

use super::Table;
use crate::cost_model::{cost_report, ArchParams, WorkloadSpec};
use crate::error::{Error, Result};

/// Workload template; each grid point fills in `rho` and `k`, with
/// `n_vis = k * tokens_per_image`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSweepConfig {
    pub arch: ArchParams,
    pub n_text: usize,
    pub tokens_per_image: usize,
    pub n_query: usize,
    pub beta: f64,
    pub u_reason: usize,
    /// Use per-image keep counts instead of `n_text + rho n_vis`.
    pub exact_lengths: bool,
    pub rho_values: Vec<f64>,
    pub k_values: Vec<usize>,
}

impl Default for CostSweepConfig {
    fn default() -> Self {
        Self {
            arch: ArchParams {
                layers: 28,
                width: 3584,
                c_att: 4.0,
                c_ffn: 24.0,
                c_dec: 4.0,
                c_score: 2.0,
            },
            n_text: 256,
            tokens_per_image: 1024,
            n_query: 32,
            beta: 1.0,
            u_reason: 0,
            exact_lengths: true,
            rho_values: vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0],
            k_values: vec![5, 10, 20],
        }
    }
}

impl CostSweepConfig {
    pub fn workload(&self, rho: f64, k: usize) -> WorkloadSpec {
        WorkloadSpec {
            n_text: self.n_text,
            n_vis: k * self.tokens_per_image,
            n_query: self.n_query,
            k,
            beta: self.beta,
            u_reason: self.u_reason,
            rho,
            image_token_counts: self.exact_lengths.then(|| vec![self.tokens_per_image; k]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSweepRow {
    pub rho: f64,
    pub k: usize,
    pub n_vis: usize,
    pub n_rho: f64,
    pub u_base: usize,
    pub f_base: f64,
    pub f_zip: f64,
    pub speedup: f64,
    pub longcontext_prefill_ratio: f64,
    pub generation_heavy_decode_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSweep {
    pub rows: Vec<CostSweepRow>,
}

impl CostSweep {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "cost_sweep",
            &[
                "rho",
                "k",
                "n_vis",
                "n_rho",
                "u_base",
                "f_base",
                "f_zip",
                "speedup",
                "longcontext_prefill_ratio",
                "generation_heavy_decode_ratio",
            ],
        );
        for r in &self.rows {
            t.push([
                r.rho.to_string(),
                r.k.to_string(),
                r.n_vis.to_string(),
                r.n_rho.to_string(),
                r.u_base.to_string(),
                format!("{:e}", r.f_base),
                format!("{:e}", r.f_zip),
                format!("{:.6}", r.speedup),
                format!("{:.6}", r.longcontext_prefill_ratio),
                format!("{:.6}", r.generation_heavy_decode_ratio),
            ]);
        }
        vec![t]
    }
}

/// One row per `(rho, k)` pair, `rho` outermost, in the order given.
pub fn run_cost_sweep(cfg: &CostSweepConfig) -> Result<CostSweep> {
    if cfg.rho_values.is_empty() || cfg.k_values.is_empty() {
        return Err(Error::ConfigInvalid(
            "rho_values and k_values must be non-empty".into(),
        ));
    }
    cfg.arch.validate()?;
    let mut rows = Vec::with_capacity(cfg.rho_values.len() * cfg.k_values.len());
    for &rho in &cfg.rho_values {
        for &k in &cfg.k_values {
            let w = cfg.workload(rho, k);
            let rep = cost_report(&w, &cfg.arch)?;
            rows.push(CostSweepRow {
                rho,
                k,
                n_vis: w.n_vis,
                n_rho: rep.lengths.n_rho,
                u_base: rep.u_base,
                f_base: rep.f_base,
                f_zip: rep.f_zip,
                speedup: rep.speedup,
                longcontext_prefill_ratio: rep.regime_estimates.longcontext_prefill_ratio,
                generation_heavy_decode_ratio: rep.regime_estimates.generation_heavy_decode_ratio,
            });
        }
    }
    Ok(CostSweep { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_ratio_speedup_at_least_one() {
        let cfg = CostSweepConfig {
            arch: ArchParams {
                c_score: 0.0,
                ..ArchParams::unit()
            },
            u_reason: 3,
            rho_values: vec![1.0],
            ..Default::default()
        };
        let sweep = run_cost_sweep(&cfg).unwrap();
        assert_eq!(sweep.rows.len(), 3);
        for r in &sweep.rows {
            assert!(r.u_base >= 1);
            assert!(r.speedup >= 1.0, "{r:?}");
        }
    }

    #[test]
    fn long_context_prefill_ratio_near_four() {
        let cfg = CostSweepConfig {
            n_text: 10,
            tokens_per_image: 100_000,
            rho_values: vec![0.5],
            k_values: vec![1],
            ..Default::default()
        };
        let r = &run_cost_sweep(&cfg).unwrap().rows[0];
        assert!((r.longcontext_prefill_ratio - 4.0).abs() < 1e-3);
    }

    #[test]
    fn f_zip_grows_with_k() {
        let cfg = CostSweepConfig {
            k_values: vec![10, 20, 40],
            ..Default::default()
        };
        let sweep = run_cost_sweep(&cfg).unwrap();
        for chunk in sweep.rows.chunks(3) {
            assert!(chunk.windows(2).all(|w| w[0].f_zip <= w[1].f_zip));
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let cfg = CostSweepConfig {
            rho_values: vec![],
            ..Default::default()
        };
        assert!(run_cost_sweep(&cfg).is_err());
        let cfg = CostSweepConfig {
            rho_values: vec![0.0],
            ..Default::default()
        };
        assert!(matches!(run_cost_sweep(&cfg), Err(Error::InvalidRatio(_))));
    }
}
