//! Gaussian embeddings with planted query-relevant visual tokens.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::EmbeddingMatrix;
use crate::listwise::MAX_CANDIDATES;

/// Inclusive range of visual tokens per image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Candidate images per instance.
    pub n_images: usize,
    pub tokens_per_image: TokenRange,
    pub embed_dim: usize,
    pub n_query_tokens: usize,
    /// Planted tokens in the relevant image.
    pub planted_per_image: usize,
    /// Standard deviation of the per-coordinate Gaussian noise added to planted tokens.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_images: 4,
            tokens_per_image: TokenRange { min: 64, max: 256 },
            embed_dim: 64,
            n_query_tokens: 8,
            planted_per_image: 1,
            noise_scale: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.n_images == 0 || self.n_images > MAX_CANDIDATES {
            return bad(format!("n_images must be in 1..={MAX_CANDIDATES}"));
        }
        let TokenRange { min, max } = self.tokens_per_image;
        if min == 0 || min > max {
            return bad(format!(
                "tokens_per_image {min}..={max} is empty or starts at 0"
            ));
        }
        if self.embed_dim == 0 || self.n_query_tokens == 0 || self.planted_per_image == 0 {
            return bad("embed_dim, n_query_tokens and planted_per_image must be >= 1".into());
        }
        if self.planted_per_image > min {
            return bad(format!(
                "planted_per_image {} exceeds the minimum image size {min}",
                self.planted_per_image
            ));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return bad(format!("noise_scale {} must be >= 0", self.noise_scale));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticInstance {
    pub query: EmbeddingMatrix,
    pub images: Vec<EmbeddingMatrix>,
    /// Image index to planted token indices (ascending).
    pub planted: BTreeMap<usize, Vec<usize>>,
    /// Query row each planted token was copied from, aligned with `planted`.
    pub planted_sources: BTreeMap<usize, Vec<usize>>,
    pub relevant_image: usize,
}

impl SyntheticInstance {
    pub fn planted_in_relevant(&self) -> &[usize] {
        self.planted
            .get(&self.relevant_image)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

fn gaussian_rows<R: Rng>(rng: &mut R, rows: usize, dim: usize) -> Vec<f64> {
    (0..rows * dim)
        .map(|_| rng.sample(StandardNormal))
        .collect()
}

/// One instance. Query and non-planted visual tokens are i.i.d. standard
/// normal; the relevant image (chosen uniformly) holds `planted_per_image`
/// tokens equal to randomly chosen query rows plus `noise_scale` Gaussian noise.
pub fn generate_instance(cfg: &SyntheticConfig) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = cfg.embed_dim;
    let q_data = gaussian_rows(&mut rng, cfg.n_query_tokens, d);
    let relevant_image = rng.random_range(0..cfg.n_images);

    let mut images = Vec::with_capacity(cfg.n_images);
    let mut planted = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for i in 0..cfg.n_images {
        let n = rng.random_range(cfg.tokens_per_image.min..=cfg.tokens_per_image.max);
        let mut data = gaussian_rows(&mut rng, n, d);
        if i == relevant_image {
            let positions = crate::pruning::random_prune_with(&mut rng, n, cfg.planted_per_image)?;
            let mut src = Vec::with_capacity(positions.len());
            for &j in &positions {
                let t = rng.random_range(0..cfg.n_query_tokens);
                for c in 0..d {
                    let noise: f64 = rng.sample(StandardNormal);
                    data[j * d + c] = q_data[t * d + c] + cfg.noise_scale * noise;
                }
                src.push(t);
            }
            planted.insert(i, positions);
            sources.insert(i, src);
        }
        images.push(EmbeddingMatrix::new(n, d, data)?);
    }
    Ok(SyntheticInstance {
        query: EmbeddingMatrix::new(cfg.n_query_tokens, d, q_data)?,
        images,
        planted,
        planted_sources: sources,
        relevant_image,
    })
}
