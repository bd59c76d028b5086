//! Randomized verification of the pooling and pruning bounds.
//!
//! Four checks, each over `trials` independent instances:
//! - sandwich: `a_j <= g_j <= a_j + ln N_q` for max-sim `a` and LSE `g`
//! - stability: a boundary gap above `ln N_q` forces identical top-K sets
//! - pruning error: `|c - c'| <= 2 eps V_max`
//! - tail gap: `eps <= ((n - K) / K) exp(-delta)`
//!
//! A violation is a tally entry, never an error. The optional self-test reruns
//! the pruning-error check with the constant 2 replaced by 1.9 and expects
//! failures, which shows the check can detect a wrong bound.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{derive_seed, trial_rng, Table};
use crate::attention::{
    check_pruning_error_bound_with_factor, softmax, tail_gap_bound_check, BOUND_SLACK,
    PRUNING_BOUND_FACTOR,
};
use crate::error::{Error, Result};
use crate::linalg::{similarity_matrix, EmbeddingMatrix, SimilarityMatrix};
use crate::pruning::{topk_stability_check, PruneScores};

/// Factor used by the mutation self-test in place of 2.
pub const MUTATED_FACTOR: f64 = 1.9;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundVerificationConfig {
    pub trials: usize,
    pub self_test: bool,
}

impl Default for BoundVerificationConfig {
    fn default() -> Self {
        Self {
            trials: 10_000,
            self_test: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Tally {
    pub name: String,
    pub trials: usize,
    pub failures: usize,
    /// Largest excess over the bound before the `1e-9` slack is applied;
    /// roundoff on tight instances shows up here without counting as a failure.
    pub max_violation: f64,
    /// Trials of the check's special family: all-equal columns for the
    /// sandwich (where the upper bound must be attained), instances whose gap
    /// meets the stability premise, tight antipodal instances for the
    /// pruning error, tied scores for the tail gap.
    pub special_cases: usize,
}

impl Tally {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundVerification {
    pub trials: usize,
    pub sandwich: Tally,
    pub stability: Tally,
    pub pruning_error: Tally,
    pub tail_gap: Tally,
    /// Pruning-error check with the mutated constant; expected to fail.
    pub self_test: Option<Tally>,
    /// All four tallies have zero failures and the self-test, if run, caught
    /// at least one.
    pub passed: bool,
}

impl BoundVerification {
    pub fn tallies(&self) -> Vec<&Tally> {
        vec![
            &self.sandwich,
            &self.stability,
            &self.pruning_error,
            &self.tail_gap,
        ]
    }

    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "bound_verification",
            &[
                "check",
                "trials",
                "failures",
                "max_violation",
                "special_cases",
                "expect_failures",
            ],
        );
        let rows = self
            .tallies()
            .into_iter()
            .map(|x| (x, false))
            .chain(self.self_test.iter().map(|x| (x, true)));
        for (x, expect) in rows {
            t.push([
                x.name.clone(),
                x.trials.to_string(),
                x.failures.to_string(),
                format!("{:e}", x.max_violation),
                x.special_cases.to_string(),
                expect.to_string(),
            ]);
        }
        vec![t]
    }
}

struct Outcome {
    violation: f64,
    failed: bool,
    special: bool,
}

fn tally(name: &str, outcomes: Vec<Outcome>) -> Tally {
    Tally {
        name: name.to_string(),
        trials: outcomes.len(),
        failures: outcomes.iter().filter(|o| o.failed).count(),
        max_violation: outcomes.iter().map(|o| o.violation).fold(0.0, f64::max),
        special_cases: outcomes.iter().filter(|o| o.special).count(),
    }
}

fn run_check<F>(trials: usize, seed: u64, stream: u64, f: F) -> Result<Vec<Outcome>>
where
    F: Fn(&mut ChaCha8Rng, u64) -> Result<Outcome> + Sync,
{
    let check_seed = derive_seed(seed, stream);
    (0..trials as u64)
        .into_par_iter()
        .map(|i| f(&mut trial_rng(check_seed, i), i))
        .collect()
}

fn uniform_matrix(
    rng: &mut ChaCha8Rng,
    nq: usize,
    n: usize,
    scale: f64,
) -> Result<SimilarityMatrix> {
    let s = (0..nq * n)
        .map(|_| scale * rng.random_range(-1.0..=1.0))
        .collect();
    SimilarityMatrix::new(nq, n, s)
}

fn sandwich_trial(rng: &mut ChaCha8Rng, i: u64) -> Result<Outcome> {
    let nq = rng.random_range(1..=32usize);
    let n = rng.random_range(1..=256usize);
    let equal_columns = i.is_multiple_of(8);
    let s = if equal_columns {
        let cols: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        SimilarityMatrix::new(nq, n, (0..nq).flat_map(|_| cols.iter().copied()).collect())?
    } else {
        uniform_matrix(rng, nq, n, 1.0)?
    };
    let p = PruneScores::from_similarity(&s)?;
    let mut violation = p.sandwich_violation().max(0.0);
    if equal_columns {
        let ln_nq = (nq as f64).ln();
        let gap = p
            .max_sim
            .iter()
            .zip(&p.lse)
            .map(|(a, g)| (g - a - ln_nq).abs())
            .fold(0.0, f64::max);
        violation = violation.max(gap);
    }
    Ok(Outcome {
        violation,
        failed: violation > BOUND_SLACK,
        special: equal_columns,
    })
}

/// Top-K entries near 1 in one random row, every other entry near -1, so the
/// boundary gap exceeds `ln 6`.
fn separated_matrix(
    rng: &mut ChaCha8Rng,
    nq: usize,
    n: usize,
    k: usize,
) -> Result<SimilarityMatrix> {
    let top = rand::seq::index::sample(rng, n, k).into_vec();
    let mut s: Vec<f64> = (0..nq * n)
        .map(|_| rng.random_range(-1.0..=-0.95))
        .collect();
    for j in top {
        for t in 0..nq {
            s[t * n + j] = rng.random_range(-1.0..=1.0);
        }
        let t = rng.random_range(0..nq);
        s[t * n + j] = rng.random_range(0.95..=1.0);
    }
    SimilarityMatrix::new(nq, n, s)
}

fn embedding_similarity(rng: &mut ChaCha8Rng, nq: usize, n: usize) -> Result<SimilarityMatrix> {
    let d = rng.random_range(2..=16usize);
    let mut gauss = |rows: usize| {
        let data = (0..rows * d).map(|_| rng.sample(StandardNormal)).collect();
        EmbeddingMatrix::new(rows, d, data)
    };
    let q = gauss(nq)?;
    let v = gauss(n)?;
    let s = similarity_matrix(&q, &v)?;
    let scale = 10.0;
    SimilarityMatrix::new(nq, n, s.as_slice().iter().map(|x| scale * x).collect())
}

fn stability_trial(rng: &mut ChaCha8Rng, i: u64) -> Result<Outcome> {
    let (s, fixed_k) = match i % 4 {
        0 => {
            let (nq, n) = (rng.random_range(1..=32), rng.random_range(2..=256));
            (uniform_matrix(rng, nq, n, 1.0)?, None)
        }
        1 => {
            let (nq, n) = (rng.random_range(1..=6), rng.random_range(2..=64));
            let k = rng.random_range(1..n);
            (separated_matrix(rng, nq, n, k)?, Some(k))
        }
        2 => {
            let (nq, n) = (rng.random_range(1..=32), rng.random_range(2..=256));
            let scale = rng.random_range(1.0..=20.0);
            (uniform_matrix(rng, nq, n, scale)?, None)
        }
        _ => {
            let (nq, n) = (rng.random_range(1..=8), rng.random_range(2..=64));
            (embedding_similarity(rng, nq, n)?, None)
        }
    };
    let k = match fixed_k {
        Some(k) => k,
        None => rng.random_range(1..s.n_visual()),
    };
    let p = PruneScores::from_similarity(&s)?;
    let r = topk_stability_check(&p.max_sim, &p.lse, k, p.n_query)?;
    let failed = r.guaranteed_stable && !r.sets_equal;
    Ok(Outcome {
        violation: if failed { 1.0 } else { 0.0 },
        failed,
        special: r.guaranteed_stable,
    })
}

fn unit_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = crate::linalg::norm(&u);
        if norm > 1e-6 {
            return u.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn pruning_error_trial(rng: &mut ChaCha8Rng, i: u64, factor: f64) -> Result<Outcome> {
    let adversarial = i.is_multiple_of(4);
    let n = rng.random_range(if adversarial { 2 } else { 1 }..=64usize);
    let d = rng.random_range(1..=16usize);
    let temp = rng.random_range(0.0..=3.0);
    let logits: Vec<f64> = (0..n)
        .map(|_| temp * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let alpha = softmax(&logits)?;
    let v_max = rng.random_range(0.1..=10.0);

    let kept_len = if adversarial {
        rng.random_range(1..n)
    } else {
        rng.random_range(1..=n)
    };
    let mut kept = rand::seq::index::sample(rng, n, kept_len).into_vec();
    kept.sort_unstable();
    let kept_mass: f64 = kept.iter().map(|&j| alpha.as_slice()[j]).sum();
    if kept_mass <= 1e-9 {
        // keep the heaviest token so the renormalization is well defined
        let (top, _) =
            alpha
                .as_slice()
                .iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |b, (j, &a)| if a > b.1 { (j, a) } else { b },
                );
        if let Err(p) = kept.binary_search(&top) {
            kept.insert(p, top);
        }
    }

    let mut data = Vec::with_capacity(n * d);
    if adversarial {
        let u = unit_direction(rng, d);
        for j in 0..n {
            let sign = if kept.binary_search(&j).is_ok() {
                1.0
            } else {
                -1.0
            };
            data.extend(u.iter().map(|x| sign * v_max * x));
        }
    } else {
        for _ in 0..n {
            let r = v_max * rng.random_range(0.0..=1.0);
            data.extend(unit_direction(rng, d).into_iter().map(|x| r * x));
        }
    }
    let v = EmbeddingMatrix::new(n, d, data)?;
    let rep = check_pruning_error_bound_with_factor(&alpha, &v, &kept, factor)?;
    Ok(Outcome {
        violation: (rep.error_norm - rep.bound).max(0.0),
        failed: !rep.holds,
        special: adversarial,
    })
}

fn tail_gap_trial(rng: &mut ChaCha8Rng, i: u64) -> Result<Outcome> {
    let n = rng.random_range(2..=256usize);
    let k = rng.random_range(1..n);
    let scale = rng.random_range(0.1..=10.0);
    let tied = i.is_multiple_of(5);
    let g: Vec<f64> = (0..n)
        .map(|_| {
            let x = scale * rng.sample::<f64, _>(StandardNormal);
            if tied {
                x.round()
            } else {
                x
            }
        })
        .collect();
    let rep = tail_gap_bound_check(&g, k)?;
    Ok(Outcome {
        violation: (rep.epsilon - rep.bound).max(0.0),
        failed: !rep.holds,
        special: tied,
    })
}

/// Runs the four checks (and optionally the mutation self-test).
/// Each check draws from its own derived stream, so adding or removing the
/// self-test leaves the other tallies unchanged.
pub fn run_bound_verification(
    cfg: &BoundVerificationConfig,
    seed: u64,
) -> Result<BoundVerification> {
    if cfg.trials == 0 {
        return Err(Error::ConfigInvalid("trials must be >= 1".into()));
    }
    let t = cfg.trials;
    let sandwich = tally("sandwich", run_check(t, seed, 1, sandwich_trial)?);
    let stability = tally("topk_stability", run_check(t, seed, 2, stability_trial)?);
    let pruning_error = tally(
        "pruning_error",
        run_check(t, seed, 3, |r, i| {
            pruning_error_trial(r, i, PRUNING_BOUND_FACTOR)
        })?,
    );
    let tail_gap = tally("tail_gap", run_check(t, seed, 4, tail_gap_trial)?);
    let self_test = if cfg.self_test {
        // same instances as the pruning-error check
        Some(tally(
            "pruning_error_mutated_1.9",
            run_check(t, seed, 3, |r, i| pruning_error_trial(r, i, MUTATED_FACTOR))?,
        ))
    } else {
        None
    };
    let passed = [&sandwich, &stability, &pruning_error, &tail_gap]
        .iter()
        .all(|x| x.passed())
        && self_test.as_ref().is_none_or(|x| x.failures > 0);
    Ok(BoundVerification {
        trials: t,
        sandwich,
        stability,
        pruning_error,
        tail_gap,
        self_test,
        passed,
    })
}
