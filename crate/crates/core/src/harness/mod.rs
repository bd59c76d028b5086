//! Synthetic experiments and randomized bound verification.
//!
//! Every experiment is a pure function of its config and a master seed.
//! Per-instance and per-trial generators are derived from the master seed
//! by index, so results do not depend on how many threads run the trials.

mod bounds;
mod cost_sweep;
mod evaluation;
mod pruning_comparison;
mod synth;

pub use bounds::{run_bound_verification, BoundVerification, BoundVerificationConfig, Tally};
pub use cost_sweep::{run_cost_sweep, CostSweep, CostSweepConfig, CostSweepRow};
pub use evaluation::{evaluate_metrics, MetricsConfig, MetricsEvaluation, RecallRow};
pub use pruning_comparison::{
    run_attention_correlation, run_pruning_comparison, AttentionCorrelation, CorrelationConfig,
    PruningComparison, RetentionRow,
};
pub use synth::{generate_instance, SyntheticConfig, SyntheticInstance, TokenRange};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for item `index` of a run with master seed `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

/// ChaCha8 generator for item `index` of a run.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// A named CSV table; cells are preformatted strings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: ToString,
    {
        self.rows
            .push(row.into_iter().map(|c| c.to_string()).collect());
    }
}
