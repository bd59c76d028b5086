//! Decoder FLOPs model for listwise reranking.
//!
//! ```text
//! prefill(n)   = L (c_att d n^2 + c_ffn d^2 n)
//! decode(n, u) = u L c_dec d n
//! score        = c_score d N_q n_vis
//!
//! F_base = prefill(n_full) + decode(n_full, round(beta k) + u_reason)
//! F_zip  = score + prefill(n_rho) + decode(n_rho, 1)
//! ```
//!
//! `n_full = n_text + n_vis`. `n_rho` uses exact per-image keep counts when
//! the image token counts are known and `n_text + rho n_vis` otherwise; the
//! score term is evaluated as an equality even though it is an upper bound.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pruning::keep_count;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub layers: usize,
    pub width: usize,
    pub c_att: f64,
    pub c_ffn: f64,
    pub c_dec: f64,
    pub c_score: f64,
}

impl ArchParams {
    /// All constants equal to one.
    pub fn unit() -> Self {
        Self {
            layers: 1,
            width: 1,
            c_att: 1.0,
            c_ffn: 1.0,
            c_dec: 1.0,
            c_score: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 {
            return Err(Error::InvalidParameter(
                "layers and width must be >= 1".into(),
            ));
        }
        for (name, c) in [
            ("c_att", self.c_att),
            ("c_ffn", self.c_ffn),
            ("c_dec", self.c_dec),
            ("c_score", self.c_score),
        ] {
            if !(c.is_finite() && c >= 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} = {c} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    fn l(&self) -> f64 {
        self.layers as f64
    }

    fn d(&self) -> f64 {
        self.width as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub n_text: usize,
    pub n_vis: usize,
    pub n_query: usize,
    /// Number of candidates.
    pub k: usize,
    pub beta: f64,
    pub u_reason: usize,
    pub rho: f64,
    /// Per-image visual token counts; when present they must sum to `n_vis`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_token_counts: Option<Vec<usize>>,
}

impl WorkloadSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidRatio(self.rho));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "beta = {} must be >= 0",
                self.beta
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if let Some(counts) = &self.image_token_counts {
            let total: usize = counts.iter().sum();
            if total != self.n_vis {
                return Err(Error::InvalidParameter(format!(
                    "image token counts sum to {total}, n_vis is {}",
                    self.n_vis
                )));
            }
        }
        Ok(())
    }

    /// Baseline output length `round(beta k) + u_reason`.
    pub fn u_base(&self) -> usize {
        (self.beta * self.k as f64).round() as usize + self.u_reason
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrunedLengthMode {
    /// `n_text + sum_i max(1, round(rho N_i))`.
    Exact,
    /// `n_text + rho n_vis`.
    Approximate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContextLengths {
    pub n_full: f64,
    pub n_rho: f64,
    pub mode: PrunedLengthMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeEstimates {
    /// `((n_text + n_vis) / (n_text + rho n_vis))^2`.
    pub longcontext_prefill_ratio: f64,
    pub inverse_rho_squared: f64,
    /// `u_base (n_text + n_vis) / (n_text + rho n_vis)`.
    pub generation_heavy_decode_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub f_base: f64,
    pub f_zip: f64,
    pub speedup: f64,
    pub f_score: f64,
    pub u_base: usize,
    pub lengths: ContextLengths,
    pub regime_estimates: RegimeEstimates,
}

pub fn prefill_flops(n: f64, p: &ArchParams) -> f64 {
    p.l() * (p.c_att * p.d() * n * n + p.c_ffn * p.d() * p.d() * n)
}

pub fn decode_flops(n: f64, u: f64, p: &ArchParams) -> f64 {
    u * (p.l() * p.c_dec * p.d() * n)
}

pub fn total_flops(n: f64, u: f64, p: &ArchParams) -> f64 {
    prefill_flops(n, p) + decode_flops(n, u, p)
}

pub fn score_flops(n_query: usize, n_vis: usize, p: &ArchParams) -> f64 {
    p.c_score * p.d() * n_query as f64 * n_vis as f64
}

pub fn context_lengths(w: &WorkloadSpec) -> Result<ContextLengths> {
    w.validate()?;
    let n_full = (w.n_text + w.n_vis) as f64;
    Ok(match &w.image_token_counts {
        Some(counts) => {
            // same rule as `token_accounting`, without its n_query <= n_text check
            let kept = counts
                .iter()
                .map(|&n| keep_count(w.rho, n))
                .sum::<Result<usize>>()?;
            ContextLengths {
                n_full,
                n_rho: (w.n_text + kept) as f64,
                mode: PrunedLengthMode::Exact,
            }
        }
        None => ContextLengths {
            n_full,
            n_rho: w.n_text as f64 + w.rho * w.n_vis as f64,
            mode: PrunedLengthMode::Approximate,
        },
    })
}

pub fn f_base(w: &WorkloadSpec, p: &ArchParams) -> Result<f64> {
    p.validate()?;
    let n = context_lengths(w)?.n_full;
    Ok(prefill_flops(n, p) + decode_flops(n, w.u_base() as f64, p))
}

pub fn f_zip(w: &WorkloadSpec, p: &ArchParams) -> Result<f64> {
    p.validate()?;
    let n = context_lengths(w)?.n_rho;
    Ok(score_flops(w.n_query, w.n_vis, p) + prefill_flops(n, p) + decode_flops(n, 1.0, p))
}

pub fn speedup(w: &WorkloadSpec, p: &ArchParams) -> Result<f64> {
    let zip = f_zip(w, p)?;
    if zip.is_nan() || zip <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(f_base(w, p)? / zip)
}

/// `(n_text + n_vis) / (n_text + rho n_vis)`.
fn context_ratio(rho: f64, n_text: usize, n_vis: usize) -> Result<f64> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::InvalidRatio(rho));
    }
    let den = n_text as f64 + rho * n_vis as f64;
    if den == 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok((n_text + n_vis) as f64 / den)
}

pub fn longcontext_prefill_ratio(rho: f64, n_text: usize, n_vis: usize) -> Result<f64> {
    let r = context_ratio(rho, n_text, n_vis)?;
    Ok(r * r)
}

pub fn generation_heavy_decode_ratio(
    u_base: usize,
    rho: f64,
    n_text: usize,
    n_vis: usize,
) -> Result<f64> {
    Ok(u_base as f64 * context_ratio(rho, n_text, n_vis)?)
}

/// Totals, speedup and both closed-form regime estimates for one workload.
pub fn cost_report(w: &WorkloadSpec, p: &ArchParams) -> Result<CostReport> {
    let lengths = context_lengths(w)?;
    let base = f_base(w, p)?;
    let zip = f_zip(w, p)?;
    if zip.is_nan() || zip <= 0.0 {
        return Err(Error::ZeroDenominator);
    }
    Ok(CostReport {
        f_base: base,
        f_zip: zip,
        speedup: base / zip,
        f_score: score_flops(w.n_query, w.n_vis, p),
        u_base: w.u_base(),
        lengths,
        regime_estimates: RegimeEstimates {
            longcontext_prefill_ratio: longcontext_prefill_ratio(w.rho, w.n_text, w.n_vis)?,
            inverse_rho_squared: 1.0 / (w.rho * w.rho),
            generation_heavy_decode_ratio: generation_heavy_decode_ratio(
                w.u_base(),
                w.rho,
                w.n_text,
                w.n_vis,
            )?,
        },
    })
}
