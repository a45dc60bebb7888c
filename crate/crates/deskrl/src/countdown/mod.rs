//! Countdown arithmetic environment: combine a multiset of candidate
//! numbers with `+ - * /` into an expression that hits a target value.
//! Verification is exact integer arithmetic, so checking a proposed
//! equation is easy while finding one requires search.
//!
//! The module provides the exact verifier, an exhaustive solving oracle
//! (which also certifies generated instances as solvable), and trace
//! analytics over free-form solution text.

mod expr;
mod solve;
mod trace;

pub use expr::{parse, Expr, Op};
pub use solve::{solve, MAX_SOLVE_CANDIDATES};
pub use trace::{parse_trace, unique_attempts, Attempt, Step, TraceAnalysis, TraceBatch};

use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How candidate consumption is enforced by [`verify_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UsageRule {
    /// Each candidate may appear at most once; unused candidates are fine.
    AtMostOnce,
    /// Every candidate must appear exactly once.
    ExactlyOnce,
}

/// A candidate multiset and a target value. Difficulty is the candidate
/// count.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CountdownInstance {
    pub candidates: Vec<i64>,
    pub target: i64,
}

impl CountdownInstance {
    pub fn new(candidates: Vec<i64>, target: i64) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::Config("candidates must be nonempty".into()));
        }
        if candidates.iter().any(|&c| c < 1) {
            return Err(Error::Config("candidates must be positive".into()));
        }
        if target < 1 {
            return Err(Error::Config("target must be positive".into()));
        }
        Ok(Self { candidates, target })
    }

    pub fn difficulty(&self) -> usize {
        self.candidates.len()
    }

    /// Line-oriented record: `candidates=a,b,c target=t`.
    pub fn to_line(&self) -> String {
        let joined = self
            .candidates
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!("candidates={joined} target={}", self.target)
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let mut candidates = None;
        let mut target = None;
        for field in line.split_whitespace() {
            if let Some(list) = field.strip_prefix("candidates=") {
                let parsed: std::result::Result<Vec<i64>, _> =
                    list.split(',').map(str::parse).collect();
                candidates =
                    Some(parsed.map_err(|e| Error::Config(format!("bad candidate list: {e}")))?);
            } else if let Some(value) = field.strip_prefix("target=") {
                target = Some(
                    value
                        .parse()
                        .map_err(|e| Error::Config(format!("bad target: {e}")))?,
                );
            } else {
                return Err(Error::Config(format!("unknown field '{field}'")));
            }
        }
        match (candidates, target) {
            (Some(candidates), Some(target)) => Self::new(candidates, target),
            _ => Err(Error::Config(
                "instance line needs candidates= and target=".into(),
            )),
        }
    }
}

/// Exact verification with the default at-most-once usage rule: true iff
/// the expression evaluates exactly to the target and uses only candidate
/// literals, each at most as often as it appears in the multiset.
///
/// Unparseable text is a parse error, distinct from a false verdict;
/// division by zero or inexact division simply yields false.
pub fn verify(instance: &CountdownInstance, expression_text: &str) -> Result<bool> {
    verify_with(instance, expression_text, UsageRule::AtMostOnce)
}

/// [`verify`] with an explicit usage rule.
pub fn verify_with(
    instance: &CountdownInstance,
    expression_text: &str,
    usage: UsageRule,
) -> Result<bool> {
    let expr = parse(expression_text)?;

    let mut remaining: std::collections::HashMap<i64, usize> = std::collections::HashMap::new();
    for &c in &instance.candidates {
        *remaining.entry(c).or_insert(0) += 1;
    }
    let leaves = expr.leaves();
    for leaf in &leaves {
        match remaining.get_mut(leaf) {
            Some(count) if *count > 0 => *count -= 1,
            _ => return Ok(false), // non-candidate literal or over-use
        }
    }
    if usage == UsageRule::ExactlyOnce && remaining.values().any(|&count| count > 0) {
        return Ok(false);
    }

    Ok(expr.eval() == Some(instance.target))
}

/// Rejection-sampling budget for [`generate`].
const GENERATE_MAX_TRIES: usize = 10_000;

/// Generates a solvable instance: candidates and target are rejection-
/// sampled until the exhaustive oracle certifies solvability. Deterministic
/// per RNG state.
pub fn generate<R: Rng>(
    difficulty: usize,
    value_range: RangeInclusive<i64>,
    target_range: RangeInclusive<i64>,
    rng: &mut R,
) -> Result<CountdownInstance> {
    if !(3..=7).contains(&difficulty) {
        return Err(Error::InvalidDifficulty(difficulty));
    }
    if *value_range.start() < 1 || *target_range.start() < 1 {
        return Err(Error::Config("value and target ranges must start at 1+".into()));
    }
    for tries in 1..=GENERATE_MAX_TRIES {
        let candidates: Vec<i64> = (0..difficulty)
            .map(|_| rng.random_range(value_range.clone()))
            .collect();
        let target = rng.random_range(target_range.clone());
        let instance = CountdownInstance::new(candidates, target)?;
        if solve(&instance)?.is_some() {
            return Ok(instance);
        }
        let _ = tries;
    }
    Err(Error::GenerationFailed {
        attempts: GENERATE_MAX_TRIES,
        acceptance_rate: 0.0,
    })
}
