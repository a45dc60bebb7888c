//! Softmax bigram MDP: action space with an explicit stop action, tabular
//! softmax policy over next-action logits, and seeded rollouts.
//!
//! States are standard actions (the previous action); the stop action
//! terminates a trace and is never a state. A rollout draws its first action
//! from a fixed initial distribution and every later action from the policy
//! row of the previous action. It ends with reward 1 on the optimal action,
//! reward 0 on stop or when the step budget runs out.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logits are clamped to this range after updates so softmax never overflows.
pub const LOGIT_CLAMP: f64 = 30.0;

/// Action space: `k_standard` standard actions plus one distinguished stop
/// action at index `k_standard`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub k_standard: usize,
    pub a_star: usize,
}

impl ActionSpace {
    pub fn new(k_standard: usize, a_star: usize) -> Result<Self> {
        if k_standard < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 standard actions, got {k_standard}"
            )));
        }
        if a_star >= k_standard {
            return Err(Error::InvalidSpace(format!(
                "optimal action {a_star} outside standard range 0..{k_standard}"
            )));
        }
        Ok(Self { k_standard, a_star })
    }

    /// Index of the stop action.
    pub fn stop(&self) -> usize {
        self.k_standard
    }

    /// Number of next actions a row distributes over (standard + stop).
    pub fn arity(&self) -> usize {
        self.k_standard + 1
    }
}

/// Tabular softmax policy: one row of `K+1` logits per standard-action state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BigramPolicy {
    space: ActionSpace,
    /// Row-major `[k_standard][arity]`.
    logits: Vec<f64>,
}

impl BigramPolicy {
    /// Initializes every row with i.i.d. uniform logits in [-3, 3], then
    /// overwrites the stop column with 4.0 and the optimal-action column
    /// with -4.0. Identical seeds produce identical matrices.
    pub fn init(seed: u64, space: ActionSpace) -> Result<Self> {
        if space.k_standard < 2 {
            return Err(Error::InvalidSpace(format!(
                "need at least 2 standard actions, got {}",
                space.k_standard
            )));
        }
        let arity = space.arity();
        let mut rng = crate::seeding::seeded_rng(seed);
        let mut logits = vec![0.0; space.k_standard * arity];
        for state in 0..space.k_standard {
            let row = &mut logits[state * arity..(state + 1) * arity];
            for l in row.iter_mut() {
                *l = rng.random_range(-3.0..=3.0);
            }
            row[space.stop()] = 4.0;
            row[space.a_star] = -4.0;
        }
        Ok(Self { space, logits })
    }

    /// Builds a policy from explicit logits (row-major `[k_standard][arity]`).
    pub fn from_logits(space: ActionSpace, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != space.k_standard * space.arity() {
            return Err(Error::InvalidSpace(format!(
                "logit matrix has {} entries, expected {}",
                logits.len(),
                space.k_standard * space.arity()
            )));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidSpace("non-finite logit".into()));
        }
        Ok(Self { space, logits })
    }

    pub fn space(&self) -> ActionSpace {
        self.space
    }

    pub fn row(&self, state: usize) -> &[f64] {
        let arity = self.space.arity();
        &self.logits[state * arity..(state + 1) * arity]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        let arity = self.space.arity();
        &mut self.logits[state * arity..(state + 1) * arity]
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn all_finite(&self) -> bool {
        self.logits.iter().all(|l| l.is_finite())
    }

    /// Softmax of a state's logit row, computed with max-subtraction.
    pub fn action_probs(&self, state: usize) -> Result<Vec<f64>> {
        if state >= self.space.k_standard {
            return Err(Error::InvalidState {
                state,
                k_standard: self.space.k_standard,
            });
        }
        Ok(softmax(self.row(state)))
    }

    /// `log pi(action | state)` without materializing the full row softmax sum twice.
    pub fn log_prob(&self, state: usize, action: usize) -> Result<f64> {
        if state >= self.space.k_standard {
            return Err(Error::InvalidState {
                state,
                k_standard: self.space.k_standard,
            });
        }
        let row = self.row(state);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = row.iter().map(|l| (l - max).exp()).sum::<f64>().ln() + max;
        Ok(row[action] - log_z)
    }

    /// Clamps every logit of a row into `[-LOGIT_CLAMP, LOGIT_CLAMP]`.
    pub fn clamp_row(&mut self, state: usize) {
        for l in self.row_mut(state) {
            *l = l.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
        }
    }

    /// Grows the policy into a larger action space, keeping everything
    /// learned about the shared actions: the overlapping standard block and
    /// the stop column are copied, while new states and new next-action
    /// columns are freshly initialized as in [`BigramPolicy::init`].
    pub fn embed(&self, new_space: ActionSpace, seed: u64) -> Result<BigramPolicy> {
        let old = self.space;
        if new_space.k_standard < old.k_standard {
            return Err(Error::InvalidSpace(
                "cannot embed into a smaller action space".into(),
            ));
        }
        if new_space.a_star != old.a_star {
            return Err(Error::InvalidSpace(
                "embedding requires the same optimal action index".into(),
            ));
        }
        let mut grown = BigramPolicy::init(seed, new_space)?;
        let arity_new = new_space.arity();
        for state in 0..old.k_standard {
            let src = self.row(state);
            let dst = &mut grown.logits[state * arity_new..(state + 1) * arity_new];
            dst[..old.k_standard].copy_from_slice(&src[..old.k_standard]);
            dst[new_space.stop()] = src[old.stop()];
        }
        Ok(grown)
    }
}

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Uniform initial distribution over standard actions excluding both the
/// optimal action and stop, so the first guess never terminates the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InitialDistribution {
    space: ActionSpace,
}

impl InitialDistribution {
    pub fn uniform_excluding_optimal(space: ActionSpace) -> Self {
        Self { space }
    }

    /// Support size (`k_standard - 1`).
    pub fn support_len(&self) -> usize {
        self.space.k_standard - 1
    }

    pub fn prob(&self, action: usize) -> f64 {
        if action == self.space.a_star || action >= self.space.k_standard {
            0.0
        } else {
            1.0 / self.support_len() as f64
        }
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        self.prob(action).ln()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        let idx = rng.random_range(0..self.support_len());
        // Skip over a_star.
        if idx >= self.space.a_star {
            idx + 1
        } else {
            idx
        }
    }
}

/// Why a rollout ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    FoundOptimal,
    Stopped,
    BudgetExhausted,
}

/// One sampled trace through the MDP.
///
/// `step_log_probs[0]` is the first action's log-probability under the
/// initial distribution; it carries no gradient. Later entries are policy
/// log-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub actions: Vec<usize>,
    pub reward: f64,
    pub terminated_by: Termination,
    pub step_log_probs: Vec<f64>,
}

impl Trajectory {
    /// Step count in tokens (actions drawn), including the initial draw.
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Actions drawn from the policy (everything after the initial draw).
    pub fn policy_steps(&self) -> usize {
        self.actions.len().saturating_sub(1)
    }
}

/// Samples one trajectory: first action from `pi0`, later actions from the
/// policy row of the previous action. Terminates with reward 1 on the
/// optimal action, reward 0 on stop, and reward 0 when `budget` actions have
/// been drawn without either (the budget-step optimal draw still wins).
pub fn rollout<R: Rng>(
    policy: &BigramPolicy,
    pi0: &InitialDistribution,
    budget: usize,
    rng: &mut R,
) -> Result<Trajectory> {
    if budget == 0 {
        return Err(Error::InvalidBudget);
    }
    let space = policy.space();
    let mut actions = Vec::with_capacity(budget.min(64));
    let mut log_probs = Vec::with_capacity(budget.min(64));

    let first = pi0.sample(rng);
    actions.push(first);
    log_probs.push(pi0.log_prob(first));

    let mut state = first;
    while actions.len() < budget {
        let probs = policy.action_probs(state)?;
        let action = sample_index(&probs, rng);
        actions.push(action);
        log_probs.push(probs[action].ln());
        if action == space.a_star {
            return Ok(Trajectory {
                actions,
                reward: 1.0,
                terminated_by: Termination::FoundOptimal,
                step_log_probs: log_probs,
            });
        }
        if action == space.stop() {
            return Ok(Trajectory {
                actions,
                reward: 0.0,
                terminated_by: Termination::Stopped,
                step_log_probs: log_probs,
            });
        }
        state = action;
    }
    Ok(Trajectory {
        actions,
        reward: 0.0,
        terminated_by: Termination::BudgetExhausted,
        step_log_probs: log_probs,
    })
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
