//! Policy-gradient updates with advantage schemes and the negative-gradient
//! mask: masking zeroes every update whose advantage is negative while
//! keeping positive-advantage updates intact.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bigram::{softmax, BigramPolicy, Trajectory};
use crate::entropy;
use crate::error::{Error, Result};

/// How a rollout group's rewards become per-trajectory advantages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageScheme {
    /// +1 for reward 1, -1 for reward 0.
    Binary,
    /// Reward minus the group mean.
    GroupCentered,
    /// Centered reward divided by max(group std, floor).
    GroupNormalized,
}

/// Update rule: learning rate, negative-gradient mask, and advantage scheme.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpdateRule {
    pub learning_rate: f64,
    /// true masks out negative-advantage updates entirely.
    pub mask_negative: bool,
    pub advantage_scheme: AdvantageScheme,
    /// Rollouts per gradient estimate.
    pub group_size: usize,
    /// Lower bound on the std used by the normalized scheme.
    pub std_floor: f64,
}

impl Default for UpdateRule {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            mask_negative: false,
            advantage_scheme: AdvantageScheme::Binary,
            group_size: 1,
            std_floor: 1e-6,
        }
    }
}

impl UpdateRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.std_floor > 0.0) {
            return Err(Error::Config(format!(
                "std_floor must be positive, got {}",
                self.std_floor
            )));
        }
        let grouped = matches!(
            self.advantage_scheme,
            AdvantageScheme::GroupCentered | AdvantageScheme::GroupNormalized
        );
        if grouped && self.group_size < 2 {
            return Err(Error::Config(
                "group advantage schemes need group_size >= 2".into(),
            ));
        }
        if self.group_size == 0 {
            return Err(Error::Config("group_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// Before/after snapshot of one touched policy row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowDelta {
    pub stop_prob_pre: f64,
    pub stop_prob_post: f64,
    pub entropy_pre: f64,
    pub entropy_post: f64,
}

/// What one `apply_update` call did to the policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    /// Touched state rows with their pre/post stop probability and entropy,
    /// keyed by state index. A masked update touches nothing.
    pub rows: BTreeMap<usize, RowDelta>,
    pub masked: bool,
}

/// Maps a group's rewards to advantages under the given scheme.
///
/// All-equal rewards under a group scheme yield all-zero advantages.
pub fn compute_advantages(
    rewards: &[f64],
    scheme: AdvantageScheme,
    std_floor: f64,
) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::EmptyGroup);
    }
    match scheme {
        AdvantageScheme::Binary => Ok(rewards
            .iter()
            .map(|&r| if r > 0.0 { 1.0 } else { -1.0 })
            .collect()),
        AdvantageScheme::GroupCentered => {
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            Ok(rewards.iter().map(|&r| r - mean).collect())
        }
        AdvantageScheme::GroupNormalized => {
            let n = rewards.len() as f64;
            let mean = rewards.iter().sum::<f64>() / n;
            let var = rewards.iter().map(|&r| (r - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(std_floor);
            Ok(rewards.iter().map(|&r| (r - mean) / std).collect())
        }
    }
}

/// Gradient of `log pi(action | state)` with respect to the state's logit
/// row: coordinate `b` is `1(b == action) - pi(b | state)`. Sums to zero.
pub fn log_prob_grad(policy: &BigramPolicy, state: usize, action: usize) -> Result<Vec<f64>> {
    let probs = policy.action_probs(state)?;
    Ok(probs
        .iter()
        .enumerate()
        .map(|(b, &p)| if b == action { 1.0 - p } else { -p })
        .collect())
}

/// Applies one token-averaged policy-gradient ascent step for a trajectory:
/// each policy-drawn step contributes
/// `learning_rate * advantage / n_policy_steps * grad log pi(a_i | a_{i-1})`
/// to its state's row. The initial action is drawn from the fixed initial
/// distribution and contributes nothing. All step gradients are evaluated at
/// the pre-update policy and applied together.
///
/// With `rule.mask_negative` and a negative advantage the call is an exact
/// no-op reported as masked.
pub fn apply_update(
    policy: &mut BigramPolicy,
    trajectory: &Trajectory,
    advantage: f64,
    rule: &UpdateRule,
) -> Result<GradientReport> {
    if !advantage.is_finite() {
        return Err(Error::NonFiniteAdvantage(advantage));
    }
    if trajectory.len() < 2 {
        return Err(Error::NoPolicySteps(trajectory.len()));
    }
    if rule.mask_negative && advantage < 0.0 {
        return Ok(GradientReport {
            rows: BTreeMap::new(),
            masked: true,
        });
    }

    let n_policy_steps = trajectory.policy_steps() as f64;
    let scale = rule.learning_rate * advantage / n_policy_steps;

    // Accumulate per-row gradients at the current parameters.
    let mut row_grads: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for i in 1..trajectory.len() {
        let state = trajectory.actions[i - 1];
        let action = trajectory.actions[i];
        let grad = log_prob_grad(policy, state, action)?;
        let acc = row_grads
            .entry(state)
            .or_insert_with(|| vec![0.0; grad.len()]);
        for (a, g) in acc.iter_mut().zip(&grad) {
            *a += g;
        }
    }

    let mut rows = BTreeMap::new();
    for (&state, grad) in &row_grads {
        let pre = softmax(policy.row(state));
        let stop_prob_pre = pre[policy.space().stop()];
        let entropy_pre = entropy::entropy_of(&pre);

        {
            let row = policy.row_mut(state);
            for (l, g) in row.iter_mut().zip(grad) {
                *l += scale * g;
            }
        }
        policy.clamp_row(state);

        let post = softmax(policy.row(state));
        rows.insert(
            state,
            RowDelta {
                stop_prob_pre,
                stop_prob_post: post[policy.space().stop()],
                entropy_pre,
                entropy_post: entropy::entropy_of(&post),
            },
        );
    }

    Ok(GradientReport {
        rows,
        masked: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigram::{ActionSpace, Termination};

    fn space3() -> ActionSpace {
        ActionSpace::new(3, 0).unwrap()
    }

    fn traj(actions: Vec<usize>, reward: f64, terminated_by: Termination) -> Trajectory {
        let n = actions.len();
        Trajectory {
            actions,
            reward,
            terminated_by,
            step_log_probs: vec![0.0; n],
        }
    }

    #[test]
    fn binary_advantages() {
        let a = compute_advantages(&[1.0, 0.0], AdvantageScheme::Binary, 1e-6).unwrap();
        assert_eq!(a, vec![1.0, -1.0]);
    }

    #[test]
    fn centered_degenerate_group_is_zero() {
        let a = compute_advantages(&[1.0, 1.0, 1.0], AdvantageScheme::GroupCentered, 1e-6).unwrap();
        assert_eq!(a, vec![0.0, 0.0, 0.0]);
        let a =
            compute_advantages(&[0.0, 0.0, 0.0], AdvantageScheme::GroupNormalized, 1e-6).unwrap();
        assert_eq!(a, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn normalized_advantages() {
        // mean 0.5, population std 0.5.
        let a = compute_advantages(
            &[1.0, 0.0, 0.0, 1.0],
            AdvantageScheme::GroupNormalized,
            1e-6,
        )
        .unwrap();
        assert_eq!(a, vec![1.0, -1.0, -1.0, 1.0]);
    }

    #[test]
    fn empty_group_is_an_error() {
        assert!(compute_advantages(&[], AdvantageScheme::Binary, 1e-6).is_err());
    }

    #[test]
    fn log_prob_grad_uniform_row() {
        let sp = space3();
        let policy =
            BigramPolicy::from_logits(sp, vec![0.0; sp.k_standard * sp.arity()]).unwrap();
        // 4-way uniform row; sampled action 0.
        let g = log_prob_grad(&policy, 1, 0).unwrap();
        assert!((g[0] - 0.75).abs() < 1e-15);
        for b in 1..4 {
            assert!((g[b] + 0.25).abs() < 1e-15);
        }
        let sum: f64 = g.iter().sum();
        assert!(sum.abs() < 1e-15);
    }

    #[test]
    fn log_prob_grad_vanishes_for_near_deterministic_row() {
        let sp = space3();
        let mut logits = vec![0.0; sp.k_standard * sp.arity()];
        logits[2] = 30.0; // state 0, action 2 nearly deterministic
        let policy = BigramPolicy::from_logits(sp, logits).unwrap();
        let g = log_prob_grad(&policy, 0, 2).unwrap();
        for v in &g {
            assert!(v.abs() < 1e-12);
        }
    }

    /// Central finite differences of log pi on random rows.
    #[test]
    fn log_prob_grad_matches_finite_differences() {
        for trial in 0..200 {
            let k = 2 + trial % 7;
            let sp = ActionSpace::new(k, 0).unwrap();
            let policy = BigramPolicy::init(trial as u64, sp).unwrap();
            let state = trial % k;
            let action = trial % sp.arity();
            let analytic = log_prob_grad(&policy, state, action).unwrap();

            let eps = 1e-6;
            for b in 0..sp.arity() {
                let mut plus = policy.clone();
                plus.row_mut(state)[b] += eps;
                let mut minus = policy.clone();
                minus.row_mut(state)[b] -= eps;
                let fd = (plus.log_prob(state, action).unwrap()
                    - minus.log_prob(state, action).unwrap())
                    / (2.0 * eps);
                let denom = analytic[b].abs().max(1e-3);
                assert!(
                    (analytic[b] - fd).abs() / denom < 1e-6,
                    "state {state} coord {b}: analytic {} vs fd {}",
                    analytic[b],
                    fd
                );
            }
        }
    }

    #[test]
    fn masked_negative_update_is_exact_noop() {
        let sp = space3();
        let mut policy = BigramPolicy::init(5, sp).unwrap();
        let before = policy.logits().to_vec();
        let rule = UpdateRule {
            mask_negative: true,
            ..UpdateRule::default()
        };
        let t = traj(vec![1, 2, sp.stop()], 0.0, Termination::Stopped);
        let report = apply_update(&mut policy, &t, -1.0, &rule).unwrap();
        assert!(report.masked);
        assert!(report.rows.is_empty());
        assert_eq!(policy.logits(), before.as_slice());
    }

    /// Single policy-drawn step with advantage -1: the sampled action's logit
    /// drops by lr * (1 - pi(a)), every other logit rises by lr * pi(b).
    #[test]
    fn single_step_negative_update_closed_form() {
        let sp = space3();
        let mut policy = BigramPolicy::init(9, sp).unwrap();
        let state = 1;
        let action = 2;
        let pre_probs = policy.action_probs(state).unwrap();
        let pre_logits = policy.row(state).to_vec();
        let rule = UpdateRule::default();

        let t = traj(vec![state, action], 0.0, Termination::BudgetExhausted);
        apply_update(&mut policy, &t, -1.0, &rule).unwrap();

        let post = policy.row(state);
        for b in 0..sp.arity() {
            let expected = if b == action {
                pre_logits[b] - rule.learning_rate * (1.0 - pre_probs[b])
            } else {
                pre_logits[b] + rule.learning_rate * pre_probs[b]
            };
            assert!((post[b] - expected).abs() < 1e-15);
        }
    }

    /// Failed trace ending in stop, mask off: stop probability at the final
    /// state strictly decreases (softmax recomputed before and after).
    ///
    /// The decrease is a consequence of the single-step closed form, so it
    /// is guaranteed when the final state's row receives only the stop
    /// step's gradient. When the trajectory visited that state earlier, the
    /// other steps' contributions (+lr * pi(stop) each) can outweigh it; the
    /// check conditions on the single-visit case.
    #[test]
    fn negative_update_pushes_stop_down() {
        let sp = ActionSpace::new(10, 0).unwrap();
        let pi0 = crate::bigram::InitialDistribution::uniform_excluding_optimal(sp);
        let rule = UpdateRule::default();
        let mut checked = 0;
        for i in 0..500u64 {
            let mut policy = BigramPolicy::init(i, sp).unwrap();
            let mut rng = crate::seeding::stream_rng(1234, i);
            let t = crate::bigram::rollout(&policy, &pi0, 60, &mut rng).unwrap();
            if t.terminated_by != Termination::Stopped || t.len() < 2 {
                continue;
            }
            let last_state = t.actions[t.len() - 2];
            let state_visits = t.actions[..t.len() - 1]
                .iter()
                .filter(|&&s| s == last_state)
                .count();
            if state_visits != 1 {
                continue;
            }
            let pre = policy.action_probs(last_state).unwrap()[sp.stop()];
            let report = apply_update(&mut policy, &t, -1.0, &rule).unwrap();
            let post = policy.action_probs(last_state).unwrap()[sp.stop()];
            assert!(
                post < pre,
                "stop prob did not drop: {pre} -> {post} (rollout {i})"
            );
            let delta = &report.rows[&last_state];
            assert!((delta.stop_prob_pre - pre).abs() < 1e-15);
            assert!((delta.stop_prob_post - post).abs() < 1e-15);
            checked += 1;
        }
        assert!(checked > 100, "too few stop-terminated rollouts: {checked}");
    }

    /// Gradient rows sum to zero, so the update preserves valid distributions.
    #[test]
    fn updates_preserve_distribution_validity() {
        let sp = ActionSpace::new(8, 3).unwrap();
        let pi0 = crate::bigram::InitialDistribution::uniform_excluding_optimal(sp);
        let rule = UpdateRule::default();
        let mut policy = BigramPolicy::init(77, sp).unwrap();
        let mut rng = crate::seeding::seeded_rng(78);
        for _ in 0..2000 {
            let t = crate::bigram::rollout(&policy, &pi0, 30, &mut rng).unwrap();
            if t.len() < 2 {
                continue;
            }
            let adv = if t.reward > 0.0 { 1.0 } else { -1.0 };
            apply_update(&mut policy, &t, adv, &rule).unwrap();
        }
        assert!(policy.all_finite());
        for state in 0..sp.k_standard {
            let probs = policy.action_probs(state).unwrap();
            let sum: f64 = probs.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert!(probs.iter().all(|&p| p > 0.0));
        }
    }

    /// Doubling the number of policy-drawn steps at fixed advantage halves
    /// each step's contribution.
    #[test]
    fn token_averaging_halves_per_step_contribution() {
        let sp = ActionSpace::new(6, 5).unwrap();
        let rule = UpdateRule::default();

        // Distinct states per step so rows get exactly one contribution each.
        let short = traj(vec![0, 1], 0.0, Termination::BudgetExhausted);
        let long = traj(vec![0, 1, 2, 3], 0.0, Termination::BudgetExhausted);

        let base = BigramPolicy::init(3, sp).unwrap();
        let pre = base.row(0).to_vec();
        let probs0 = base.action_probs(0).unwrap();

        let mut short_policy = base.clone();
        apply_update(&mut short_policy, &short, -1.0, &rule).unwrap();
        let mut long_policy = base.clone();
        apply_update(&mut long_policy, &long, -1.0, &rule).unwrap();

        for b in 0..sp.arity() {
            let d_short = short_policy.row(0)[b] - pre[b];
            let d_long = long_policy.row(0)[b] - pre[b];
            let g = if b == 1 { 1.0 - probs0[b] } else { -probs0[b] };
            assert!((d_short - (-rule.learning_rate) * g).abs() < 1e-15);
            assert!((d_long - d_short / 3.0).abs() < 1e-15, "coord {b}");
        }
    }

    #[test]
    fn non_finite_advantage_is_an_error() {
        let sp = space3();
        let mut policy = BigramPolicy::init(0, sp).unwrap();
        let t = traj(vec![1, 2], 0.0, Termination::BudgetExhausted);
        assert!(apply_update(&mut policy, &t, f64::NAN, &UpdateRule::default()).is_err());
    }

    #[test]
    fn too_short_trajectory_is_an_error() {
        let sp = space3();
        let mut policy = BigramPolicy::init(0, sp).unwrap();
        let t = traj(vec![1], 0.0, Termination::BudgetExhausted);
        assert!(matches!(
            apply_update(&mut policy, &t, 1.0, &UpdateRule::default()),
            Err(Error::NoPolicySteps(1))
        ));
    }

    #[test]
    fn rule_validation() {
        assert!(UpdateRule::default().validate().is_ok());
        assert!(UpdateRule {
            learning_rate: 0.0,
            ..UpdateRule::default()
        }
        .validate()
        .is_err());
        assert!(UpdateRule {
            advantage_scheme: AdvantageScheme::GroupCentered,
            group_size: 1,
            ..UpdateRule::default()
        }
        .validate()
        .is_err());
    }
}
