//! Core algorithms for pruned listwise multimodal reranking.
//!
//! - [`pruning`]: max-sim scoring of visual tokens against query states and
//!   per-image top-K selection, plus a uniform random baseline.
//! - [`attention`]: softmax attention outputs, tail-mass pruning error and
//!   the tail-gap estimate.
//! - [`listwise`]: identifier assignment and single-pass ranking from logits.
//! - [`losses`]: weighted RankNet, geometric soft-rank cross-entropy, NLL.
//! - [`cost_model`]: analytic FLOPs of full-context versus pruned reranking.
//! - [`metrics`]: Recall@k, nDCG@k, P@1, failure buckets, Spearman.
//! - [`harness`]: synthetic experiments and randomized bound checks.
//!
//! All randomness is ChaCha8 seeded from `u64`, so results are reproducible
//! across platforms and thread counts.
//!
//! ```
//! use prunerank_core::listwise::rank_from_logits;
//! use prunerank_core::pruning::prune_images;
//! use prunerank_core::EmbeddingMatrix;
//!
//! let query = EmbeddingMatrix::from_rows(&[[1.0, 0.0], [0.6, 0.8]])?;
//! let pages = vec![EmbeddingMatrix::from_rows(&[[0.0, 1.0], [1.0, 0.1], [-1.0, 0.0]])?];
//! let kept = prune_images(&query, &pages, 0.5)?;
//! assert_eq!(kept[0].kept_indices, vec![0, 1]);
//! let order = rank_from_logits(&[0.2, 1.5, -0.3])?;
//! assert_eq!(order.order(), &[1, 0, 2]);
//! # Ok::<(), prunerank_core::Error>(())
//! ```

pub mod attention;
pub mod cost_model;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod listwise;
pub mod losses;
pub mod metrics;
pub mod pruning;

pub use attention::{AttentionWeights, PruneErrorReport, PrunedOutput, TailGapReport};
pub use cost_model::{ArchParams, CostReport, PrunedLengthMode, WorkloadSpec};
pub use error::{Error, Result};
pub use linalg::{EmbeddingMatrix, RealVector, SimilarityMatrix};
pub use listwise::{CandidateList, Permutation, TokenAccounting};
pub use losses::{LossValue, SoftTarget, TargetRanking};
pub use metrics::{Aggregate, FailureClass, FailureLabel, FailureSummary, QueryJudgment};
pub use pruning::{PruneResult, PruneScores, StabilityReport};
