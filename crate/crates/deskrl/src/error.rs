//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by any deskrl module.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid action space: {0}")]
    InvalidSpace(String),

    #[error("invalid state {state}: states range over standard actions 0..{k_standard}")]
    InvalidState { state: usize, k_standard: usize },

    #[error("rollout budget must be at least 1")]
    InvalidBudget,

    #[error("advantage group is empty")]
    EmptyGroup,

    #[error("advantage is not finite: {0}")]
    NonFiniteAdvantage(f64),

    #[error("trajectory has no policy-drawn steps (length {0} < 2)")]
    NoPolicySteps(usize),

    #[error("invalid probability distribution: {0}")]
    InvalidDistribution(String),

    #[error("theorem precondition violated: argmax of the distribution is the optimal action")]
    ArgmaxIsOptimal,

    #[error("expression parse error: {0}")]
    Parse(String),

    #[error("candidate count {0} exceeds the exhaustive-search limit of {1}")]
    TooManyCandidates(usize, usize),

    #[error("difficulty {0} outside the supported range 3..=7")]
    InvalidDifficulty(usize),

    #[error("instance generation failed after {attempts} tries (acceptance rate {acceptance_rate:.4})")]
    GenerationFailed { attempts: usize, acceptance_rate: f64 },

    #[error("invalid k={k} for pass@k with n={n}")]
    InvalidK { k: usize, n: usize },

    #[error("invalid outcome counts: c={c} > n={n}")]
    InvalidCounts { c: usize, n: usize },

    #[error("degenerate probe: all budget probes returned zero success")]
    DegenerateProbe,

    #[error("curriculum stage list is empty")]
    EmptyCurriculum,

    #[error("training diverged: non-finite logits after update {0}")]
    Diverged(usize),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
