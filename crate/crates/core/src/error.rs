use thiserror::Error;

/// Errors produced by the pruning, ranking, loss and metric routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("vector norm below 1e-12{}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    ZeroNorm { row: Option<usize> },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("non-finite value encountered")]
    NonFinite,

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("empty input")]
    EmptyInput,

    #[error("keep ratio {0} outside (0, 1]")]
    InvalidRatio(f64),

    #[error("k = {k} out of range for {len} items")]
    KOutOfRange { k: usize, len: usize },

    #[error("all attention mass pruned (tail mass {0})")]
    AllMassPruned(f64),

    #[error("{0} candidates exceed the single-symbol identifier alphabet")]
    TooManyCandidates(usize),

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    #[error("at least {min} candidates required, got {actual}")]
    TooFewCandidates { min: usize, actual: usize },

    #[error("gamma {0} outside (0, 1)")]
    InvalidGamma(f64),

    #[error("probability {0} outside (0, 1]")]
    InvalidProbability(f64),

    #[error("finite-difference step {0} outside [1e-8, 1e-3]")]
    InvalidStep(f64),

    #[error("invalid rank {0}; ranks are 1-based")]
    InvalidRank(usize),

    #[error("zero denominator")]
    ZeroDenominator,

    #[error("relevant set is empty")]
    EmptyRelevantSet,

    #[error("ranking is empty")]
    EmptyRanking,

    #[error("subset {0:?} has no queries")]
    EmptySubset(String),

    #[error("no relevant item appears in the ranking")]
    GroundTruthNotRanked,

    #[error("input is constant; rank correlation undefined")]
    DegenerateConstant,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid config: {0}")]
    ConfigInvalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
