//! Coupled data/budget curriculum: a stage fixes a dataset, probes
//! performance at each candidate budget B and its double, and trains at the
//! smallest B whose doubling gains less than a factor kappa. Fixed-budget
//! and budget-only baselines share the same machinery.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bigram::{rollout, ActionSpace, BigramPolicy, InitialDistribution};
use crate::error::{Error, Result};
use crate::metrics::{self, RunSeries, RunSeriesRow};
use crate::seeding::{derive_seed, stream_rng};
use crate::update::{apply_update, compute_advantages, UpdateRule};

/// A success-rate estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// A trainable, evaluable environment. Evaluation is side-effect-free on
/// the policy; training advances it one gradient estimate at a time.
pub trait Environment: Sync {
    type Policy: Clone + Send + Sync;
    type Dataset: Clone + Sync;

    /// Success rate of the policy on the dataset at the given budget.
    fn evaluate(
        &self,
        policy: &Self::Policy,
        dataset: &Self::Dataset,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<Estimate>;

    /// One update: sample a rollout group at the budget and apply the rule.
    fn train_step(
        &self,
        policy: &mut Self::Policy,
        dataset: &Self::Dataset,
        budget: usize,
        rule: &UpdateRule,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()>;

    /// Mean rollout length of the policy on the dataset (for default B0).
    fn mean_length(
        &self,
        policy: &Self::Policy,
        dataset: &Self::Dataset,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<f64>;

    /// Carries a policy into a (possibly different) dataset, e.g. growing
    /// the action space between stages.
    fn adapt(&self, policy: &Self::Policy, dataset: &Self::Dataset, seed: u64) -> Result<Self::Policy>;

    /// One checkpoint series row for the policy on the dataset.
    fn summarize(
        &self,
        step: usize,
        policy: &Self::Policy,
        base: &Self::Policy,
        dataset: &Self::Dataset,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<RunSeriesRow>;

    fn policy_finite(&self, policy: &Self::Policy) -> bool;
}

/// One curriculum stage: a dataset, candidate budgets, and the selection
/// threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumStage<D> {
    pub dataset: D,
    /// Ascending candidate budgets.
    pub budget_grid: Vec<usize>,
    /// Doubling threshold, > 1.
    pub kappa: f64,
    /// Minimal reasonable budget; None derives it from the incoming
    /// policy's mean rollout length on the dataset.
    pub b0: Option<usize>,
    /// Training updates for the stage.
    pub steps: usize,
}

impl<D> CurriculumStage<D> {
    pub fn validate(&self) -> Result<()> {
        if self.budget_grid.len() < 2 {
            return Err(Error::Config("budget grid needs at least two entries".into()));
        }
        if self.budget_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("budget grid must be strictly ascending".into()));
        }
        if !(self.kappa > 1.0) {
            return Err(Error::Config(format!(
                "kappa must exceed 1, got {}",
                self.kappa
            )));
        }
        if let Some(b0) = self.b0 {
            if b0 < 1 {
                return Err(Error::Config("b0 must be at least 1".into()));
            }
        }
        Ok(())
    }
}

/// One probed budget. Grid entries carry the doubling predicate; budgets
/// probed only as someone's double have `satisfied: None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub budget: usize,
    pub j: f64,
    pub se: f64,
    /// `Some(J(2B) <= kappa * J(B))` for considered grid entries.
    pub satisfied: Option<bool>,
    pub chosen: bool,
}

/// Outcome of budget selection for one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSelection {
    pub chosen: usize,
    /// No probed budget satisfied the predicate; the largest grid budget
    /// was returned instead.
    pub saturated: bool,
    /// Resolved minimal budget.
    pub b0: usize,
    /// All probed budgets in ascending order (grid entries and doubles).
    pub probes: Vec<ProbeRow>,
}

/// Picks the smallest grid budget `B >= b0` with `J(2B) <= kappa * J(B)`.
/// Doubled budgets are evaluated directly whether or not they sit on the
/// grid; each distinct budget is probed once, in parallel, with a seed
/// derived from the budget value so results are worker-count independent.
/// If no budget satisfies the predicate the largest considered budget is
/// returned with a saturation warning; all-zero probes are an error.
pub fn select_budget<E: Environment>(
    env: &E,
    policy: &E::Policy,
    stage: &CurriculumStage<E::Dataset>,
    rollouts: usize,
    seed: u64,
) -> Result<BudgetSelection> {
    stage.validate()?;
    let b0 = match stage.b0 {
        Some(b0) => b0,
        None => {
            let largest = *stage.budget_grid.last().unwrap();
            let mean =
                env.mean_length(policy, &stage.dataset, largest, rollouts, derive_seed(seed, 0))?;
            (mean.ceil() as usize).max(1)
        }
    };

    let considered: Vec<usize> = stage
        .budget_grid
        .iter()
        .copied()
        .filter(|&b| b >= b0)
        .collect();
    if considered.is_empty() {
        return Err(Error::Config(format!("no grid budget reaches b0 = {b0}")));
    }

    let mut distinct: Vec<usize> = considered
        .iter()
        .flat_map(|&b| [b, 2 * b])
        .collect();
    distinct.sort_unstable();
    distinct.dedup();

    let estimates: Vec<Estimate> = distinct
        .par_iter()
        .map(|&budget| {
            env.evaluate(
                policy,
                &stage.dataset,
                budget,
                rollouts,
                derive_seed(seed, budget as u64),
            )
        })
        .collect::<Result<_>>()?;
    let j_of = |budget: usize| -> Estimate {
        estimates[distinct.binary_search(&budget).unwrap()]
    };

    if estimates.iter().all(|e| e.mean == 0.0) {
        return Err(Error::DegenerateProbe);
    }

    let chosen = considered
        .iter()
        .copied()
        .find(|&b| j_of(2 * b).mean <= stage.kappa * j_of(b).mean);
    let saturated = chosen.is_none();
    let chosen = chosen.unwrap_or(*considered.last().unwrap());

    let probes: Vec<ProbeRow> = distinct
        .iter()
        .map(|&budget| {
            let est = j_of(budget);
            let satisfied = considered
                .contains(&budget)
                .then(|| j_of(2 * budget).mean <= stage.kappa * est.mean);
            ProbeRow {
                budget,
                j: est.mean,
                se: est.se,
                satisfied,
                chosen: budget == chosen,
            }
        })
        .collect();

    Ok(BudgetSelection {
        chosen,
        saturated,
        b0,
        probes,
    })
}

/// Knobs shared by curriculum and baseline runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub seed: u64,
    /// Rollouts per budget probe.
    pub probe_rollouts: usize,
    /// Rollouts per checkpoint summary.
    pub eval_rollouts: usize,
    /// Updates between checkpoints.
    pub checkpoint_interval: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            probe_rollouts: 1024,
            eval_rollouts: 256,
            checkpoint_interval: 200,
        }
    }
}

/// Metrics for one completed stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRun {
    pub stage_index: usize,
    pub selection: BudgetSelection,
    pub series: RunSeries,
}

/// A trained policy plus per-stage metrics.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumOutcome<P> {
    pub policy: P,
    pub stages: Vec<StageRun>,
}

/// Runs the stages in order: adapt the incoming policy to the stage
/// dataset, select its budget, train for the stage's update count, and pass
/// the policy on. Stage metrics are checkpointed on the configured
/// interval.
pub fn run_curriculum<E: Environment>(
    env: &E,
    policy: &E::Policy,
    stages: &[CurriculumStage<E::Dataset>],
    rule: &UpdateRule,
    opts: &RunOptions,
) -> Result<CurriculumOutcome<E::Policy>> {
    if stages.is_empty() {
        return Err(Error::EmptyCurriculum);
    }
    rule.validate()?;
    let mut policy = policy.clone();
    let mut runs = Vec::with_capacity(stages.len());
    for (stage_index, stage) in stages.iter().enumerate() {
        let stage_seed = derive_seed(opts.seed, 1000 + stage_index as u64);
        policy = env.adapt(&policy, &stage.dataset, derive_seed(stage_seed, 1))?;
        let selection = select_budget(env, &policy, stage, opts.probe_rollouts, stage_seed)?;
        let series = train_stage(
            env,
            &mut policy,
            &stage.dataset,
            selection.chosen,
            stage.steps,
            rule,
            opts,
            stage_seed,
        )?;
        runs.push(StageRun {
            stage_index,
            selection,
            series,
        });
    }
    Ok(CurriculumOutcome {
        policy,
        stages: runs,
    })
}

/// Trains a single stage at a fixed budget with no budget selection.
pub fn baseline_fixed<E: Environment>(
    env: &E,
    policy: &E::Policy,
    dataset: &E::Dataset,
    budget: usize,
    steps: usize,
    rule: &UpdateRule,
    opts: &RunOptions,
) -> Result<(E::Policy, RunSeries)> {
    rule.validate()?;
    let stage_seed = derive_seed(opts.seed, 1000);
    let mut policy = env.adapt(policy, dataset, derive_seed(stage_seed, 1))?;
    let series = train_stage(env, &mut policy, dataset, budget, steps, rule, opts, stage_seed)?;
    Ok((policy, series))
}

#[allow(clippy::too_many_arguments)]
fn train_stage<E: Environment>(
    env: &E,
    policy: &mut E::Policy,
    dataset: &E::Dataset,
    budget: usize,
    steps: usize,
    rule: &UpdateRule,
    opts: &RunOptions,
    stage_seed: u64,
) -> Result<RunSeries> {
    let base = policy.clone();
    let mut series = RunSeries::default();
    let checkpoint = |step: usize, policy: &E::Policy, series: &mut RunSeries| -> Result<()> {
        let row = env.summarize(
            step,
            policy,
            &base,
            dataset,
            budget,
            opts.eval_rollouts,
            derive_seed(stage_seed, 2_000_000 + step as u64),
        )?;
        series.push(row);
        Ok(())
    };

    checkpoint(0, policy, &mut series)?;
    let mut rng = stream_rng(derive_seed(stage_seed, 42), 0);
    for step in 1..=steps {
        env.train_step(policy, dataset, budget, rule, &mut rng)?;
        if !env.policy_finite(policy) {
            return Err(Error::Diverged(step));
        }
        if step % opts.checkpoint_interval == 0 || step == steps {
            checkpoint(step, policy, &mut series)?;
        }
    }
    series.validate()?;
    Ok(series)
}

/// The bigram-MDP environment: the dataset is the action space (its size is
/// the difficulty), evaluation is parallel seeded rollouts, and a train
/// step samples one rollout group and applies the update rule.
#[derive(Debug, Clone, Copy, Default)]
pub struct PkEnvironment;

impl PkEnvironment {
    fn batch(
        policy: &BigramPolicy,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<Vec<crate::bigram::Trajectory>> {
        let pi0 = InitialDistribution::uniform_excluding_optimal(policy.space());
        (0..rollouts as u64)
            .into_par_iter()
            .map(|i| rollout(policy, &pi0, budget, &mut stream_rng(seed, i)))
            .collect()
    }
}

impl Environment for PkEnvironment {
    type Policy = BigramPolicy;
    type Dataset = ActionSpace;

    fn evaluate(
        &self,
        policy: &BigramPolicy,
        dataset: &ActionSpace,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<Estimate> {
        if policy.space() != *dataset {
            return Err(Error::InvalidSpace(
                "policy does not match the stage action space".into(),
            ));
        }
        let batch = Self::batch(policy, budget, rollouts, seed)?;
        let mean = batch.iter().map(|t| t.reward).sum::<f64>() / rollouts as f64;
        let se = (mean * (1.0 - mean) / rollouts as f64).sqrt();
        Ok(Estimate { mean, se })
    }

    fn train_step(
        &self,
        policy: &mut BigramPolicy,
        dataset: &ActionSpace,
        budget: usize,
        rule: &UpdateRule,
        rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        if policy.space() != *dataset {
            return Err(Error::InvalidSpace(
                "policy does not match the stage action space".into(),
            ));
        }
        if rule.group_size == 1 && rule.advantage_scheme == crate::update::AdvantageScheme::Binary
        {
            return train_step_single(policy, budget, rule, rng);
        }
        let pi0 = InitialDistribution::uniform_excluding_optimal(policy.space());
        let group: Vec<_> = (0..rule.group_size)
            .map(|_| rollout(policy, &pi0, budget, rng))
            .collect::<Result<_>>()?;
        let rewards: Vec<f64> = group.iter().map(|t| t.reward).collect();
        let advantages = compute_advantages(&rewards, rule.advantage_scheme, rule.std_floor)?;
        for (trajectory, advantage) in group.iter().zip(advantages) {
            if trajectory.len() < 2 {
                continue; // no policy-drawn steps to update
            }
            apply_update(policy, trajectory, advantage, rule)?;
        }
        Ok(())
    }

    fn mean_length(
        &self,
        policy: &BigramPolicy,
        _dataset: &ActionSpace,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<f64> {
        let batch = Self::batch(policy, budget, rollouts, seed)?;
        Ok(batch.iter().map(|t| t.len()).sum::<usize>() as f64 / rollouts as f64)
    }

    fn adapt(&self, policy: &BigramPolicy, dataset: &ActionSpace, seed: u64) -> Result<BigramPolicy> {
        if policy.space() == *dataset {
            Ok(policy.clone())
        } else {
            policy.embed(*dataset, seed)
        }
    }

    fn summarize(
        &self,
        step: usize,
        policy: &BigramPolicy,
        base: &BigramPolicy,
        _dataset: &ActionSpace,
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<RunSeriesRow> {
        let batch = Self::batch(policy, budget, rollouts, seed)?;
        metrics::summarize(step, &batch, policy, base)
    }

    fn policy_finite(&self, policy: &BigramPolicy) -> bool {
        policy.all_finite()
    }
}

/// Single-trajectory binary-advantage update with the sampling and gradient
/// softmaxes shared: the rollout's per-step probability rows are exactly the
/// pre-update rows the gradient needs, so recomputing them per step would
/// triple the exp() work in the training hot loop. Draws the same RNG
/// sequence and produces bitwise-identical logits to
/// `rollout` + `apply_update` (pinned by a test).
fn train_step_single(
    policy: &mut BigramPolicy,
    budget: usize,
    rule: &UpdateRule,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<()> {
    use crate::bigram::{sample_index, softmax, Termination};

    if budget == 0 {
        return Err(Error::InvalidBudget);
    }
    let space = policy.space();
    let pi0 = InitialDistribution::uniform_excluding_optimal(space);

    // Rollout, keeping each step's probability row.
    let mut steps: Vec<(usize, usize, Vec<f64>)> = Vec::new();
    let mut state = pi0.sample(rng);
    let mut drawn = 1usize;
    let mut reward = 0.0;
    let mut terminated = Termination::BudgetExhausted;
    while drawn < budget {
        let probs = softmax(policy.row(state));
        let action = sample_index(&probs, rng);
        drawn += 1;
        steps.push((state, action, probs));
        if action == space.a_star {
            reward = 1.0;
            terminated = Termination::FoundOptimal;
            break;
        }
        if action == space.stop() {
            terminated = Termination::Stopped;
            break;
        }
        state = action;
    }
    let _ = terminated;
    if steps.is_empty() {
        return Ok(()); // budget 1: no policy-drawn steps
    }

    let advantage = if reward > 0.0 { 1.0 } else { -1.0 };
    if rule.mask_negative && advantage < 0.0 {
        return Ok(());
    }
    let scale = rule.learning_rate * advantage / steps.len() as f64;

    // Same per-row accumulation order as apply_update.
    let mut row_grads: std::collections::BTreeMap<usize, Vec<f64>> =
        std::collections::BTreeMap::new();
    for (state, action, probs) in &steps {
        let acc = row_grads
            .entry(*state)
            .or_insert_with(|| vec![0.0; probs.len()]);
        for (b, (a, p)) in acc.iter_mut().zip(probs).enumerate() {
            *a += if b == *action { 1.0 - p } else { -p };
        }
    }
    for (state, grad) in &row_grads {
        let row = policy.row_mut(*state);
        for (l, g) in row.iter_mut().zip(grad) {
            *l += scale * g;
        }
        policy.clamp_row(*state);
    }
    Ok(())
}

/// Closed-form success rate of the identical-rows chain: with per-step
/// optimal-action probability `p` and stop probability `q`, a budget-B
/// trace (one initial draw plus B-1 policy draws) succeeds with probability
/// `p (1 - (1-p-q)^(B-1)) / (p + q)`.
pub fn geometric_success(p: f64, q: f64, budget: usize) -> f64 {
    if budget < 2 {
        return 0.0;
    }
    let r = 1.0 - p - q;
    p * (1.0 - r.powi(budget as i32 - 1)) / (p + q)
}

/// Expected trace length of the identical-rows chain at a budget.
pub fn geometric_mean_length(p: f64, q: f64, budget: usize) -> f64 {
    let r = 1.0 - p - q;
    let mut expected = 1.0;
    let mut survive = 1.0;
    for _ in 1..budget {
        expected += survive;
        survive *= r;
    }
    expected
}

/// Analytic environment with the closed-form success curve above: exact
/// J(B), no sampling noise. The policy is a unit type and training is a
/// no-op; it exists to exercise budget selection against an oracle.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticGeometricEnv;

/// Per-step success and stop probabilities of the synthetic curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometricCurve {
    pub p: f64,
    pub q: f64,
}

impl Environment for SyntheticGeometricEnv {
    type Policy = ();
    type Dataset = GeometricCurve;

    fn evaluate(
        &self,
        _policy: &(),
        dataset: &GeometricCurve,
        budget: usize,
        _rollouts: usize,
        _seed: u64,
    ) -> Result<Estimate> {
        Ok(Estimate {
            mean: geometric_success(dataset.p, dataset.q, budget),
            se: 0.0,
        })
    }

    fn train_step(
        &self,
        _policy: &mut (),
        _dataset: &GeometricCurve,
        _budget: usize,
        _rule: &UpdateRule,
        _rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        Ok(())
    }

    fn mean_length(
        &self,
        _policy: &(),
        dataset: &GeometricCurve,
        budget: usize,
        _rollouts: usize,
        _seed: u64,
    ) -> Result<f64> {
        Ok(geometric_mean_length(dataset.p, dataset.q, budget))
    }

    fn adapt(&self, _policy: &(), _dataset: &GeometricCurve, _seed: u64) -> Result<()> {
        Ok(())
    }

    fn summarize(
        &self,
        step: usize,
        _policy: &(),
        _base: &(),
        dataset: &GeometricCurve,
        budget: usize,
        _rollouts: usize,
        _seed: u64,
    ) -> Result<RunSeriesRow> {
        Ok(RunSeriesRow {
            step,
            reward: geometric_success(dataset.p, dataset.q, budget),
            length: geometric_mean_length(dataset.p, dataset.q, budget),
            p_stop: Some(dataset.q),
            entropy: None,
            kl: None,
            unique_attempts: None,
            chained_mean: None,
        })
    }

    fn policy_finite(&self, _policy: &()) -> bool {
        true
    }
}

/// Environment backed by an explicit `budget -> J` table, for worked
/// examples where the performance curve is given.
#[derive(Debug, Clone)]
pub struct TableEnv {
    pub table: std::collections::BTreeMap<usize, f64>,
}

impl Environment for TableEnv {
    type Policy = ();
    type Dataset = ();

    fn evaluate(
        &self,
        _policy: &(),
        _dataset: &(),
        budget: usize,
        _rollouts: usize,
        _seed: u64,
    ) -> Result<Estimate> {
        let j = self
            .table
            .get(&budget)
            .copied()
            .ok_or_else(|| Error::Config(format!("no table entry for budget {budget}")))?;
        Ok(Estimate { mean: j, se: 0.0 })
    }

    fn train_step(
        &self,
        _policy: &mut (),
        _dataset: &(),
        _budget: usize,
        _rule: &UpdateRule,
        _rng: &mut rand_chacha::ChaCha8Rng,
    ) -> Result<()> {
        Ok(())
    }

    fn mean_length(
        &self,
        _policy: &(),
        _dataset: &(),
        budget: usize,
        _rollouts: usize,
        _seed: u64,
    ) -> Result<f64> {
        Ok(budget as f64)
    }

    fn adapt(&self, _policy: &(), _dataset: &(), _seed: u64) -> Result<()> {
        Ok(())
    }

    fn summarize(
        &self,
        step: usize,
        policy: &(),
        _base: &(),
        dataset: &(),
        budget: usize,
        rollouts: usize,
        seed: u64,
    ) -> Result<RunSeriesRow> {
        let est = self.evaluate(policy, dataset, budget, rollouts, seed)?;
        Ok(RunSeriesRow {
            step,
            reward: est.mean,
            length: budget as f64,
            p_stop: None,
            entropy: None,
            kl: None,
            unique_attempts: None,
            chained_mean: None,
        })
    }

    fn policy_finite(&self, _policy: &()) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_env() -> TableEnv {
        // The worked probe table: J(512)=0.20 J(1024)=0.35 J(2048)=0.40
        // J(4096)=0.42.
        let table = [(512, 0.20), (1024, 0.35), (2048, 0.40), (4096, 0.42)]
            .into_iter()
            .collect();
        TableEnv { table }
    }

    fn table_stage(kappa: f64, b0: usize) -> CurriculumStage<()> {
        CurriculumStage {
            dataset: (),
            budget_grid: vec![512, 1024, 2048],
            kappa,
            b0: Some(b0),
            steps: 0,
        }
    }

    #[test]
    fn worked_probe_table_picks_1024() {
        let env = table_env();
        let selection = select_budget(&env, &(), &table_stage(1.2, 512), 16, 0).unwrap();
        // 512 fails: 0.35 > 1.2 * 0.20 = 0.24; 1024 passes: 0.40 <= 0.42.
        assert_eq!(selection.chosen, 1024);
        assert!(!selection.saturated);
        // Probed: the grid entries 512, 1024, 2048 plus the double 4096.
        assert_eq!(selection.probes.len(), 4);
        assert_eq!(selection.probes[0].satisfied, Some(false));
        assert_eq!(selection.probes[1].satisfied, Some(true));
        assert!(selection.probes[1].chosen);
        assert_eq!(selection.probes[3].budget, 4096);
        assert_eq!(selection.probes[3].satisfied, None);
    }

    #[test]
    fn flat_curve_picks_b0() {
        let table = [(512, 0.3), (1024, 0.3), (2048, 0.3), (4096, 0.3)]
            .into_iter()
            .collect();
        let env = TableEnv { table };
        let selection = select_budget(&env, &(), &table_stage(1.2, 512), 16, 0).unwrap();
        assert_eq!(selection.chosen, 512);
    }

    #[test]
    fn saturation_returns_largest_with_warning() {
        // Doubling always gains more than kappa.
        let table = [
            (512, 0.01),
            (1024, 0.1),
            (2048, 0.4),
            (4096, 0.9),
        ]
        .into_iter()
        .collect();
        let env = TableEnv { table };
        let selection = select_budget(&env, &(), &table_stage(1.2, 512), 16, 0).unwrap();
        assert_eq!(selection.chosen, 2048);
        assert!(selection.saturated);
    }

    #[test]
    fn degenerate_probes_error() {
        let table = [(512, 0.0), (1024, 0.0), (2048, 0.0), (4096, 0.0)]
            .into_iter()
            .collect();
        let env = TableEnv { table };
        assert!(matches!(
            select_budget(&env, &(), &table_stage(1.2, 512), 16, 0),
            Err(Error::DegenerateProbe)
        ));
    }

    #[test]
    fn b0_filters_small_grid_entries() {
        let env = table_env();
        let selection = select_budget(&env, &(), &table_stage(1.2, 1000), 16, 0).unwrap();
        // 512 is below b0 and never probed.
        assert_eq!(selection.probes[0].budget, 1024);
        assert_eq!(selection.chosen, 1024);
    }

    #[test]
    fn kappa_monotonicity_on_synthetic_curves() {
        let env = SyntheticGeometricEnv;
        for trial in 0..200u64 {
            let mut rng = stream_rng(91, trial);
            use rand::Rng;
            let p = rng.random_range(1e-4..5e-3);
            let q = rng.random_range(1e-4..5e-3);
            let kappa_lo = rng.random_range(1.01..1.5);
            let kappa_hi = kappa_lo + rng.random_range(0.0..1.0);
            let grid = vec![16, 32, 64, 128, 256, 512, 1024, 2048];
            let stage_lo = CurriculumStage {
                dataset: GeometricCurve { p, q },
                budget_grid: grid.clone(),
                kappa: kappa_lo,
                b0: Some(16),
                steps: 0,
            };
            let stage_hi = CurriculumStage {
                kappa: kappa_hi,
                ..stage_lo.clone()
            };
            let lo = select_budget(&env, &(), &stage_lo, 16, 0).unwrap();
            let hi = select_budget(&env, &(), &stage_hi, 16, 0).unwrap();
            assert!(
                hi.chosen <= lo.chosen,
                "kappa {kappa_hi} chose {} > {} at kappa {kappa_lo}",
                hi.chosen,
                lo.chosen
            );
        }
    }

    /// select_budget against an independent scan of the closed form.
    #[test]
    fn synthetic_selection_matches_analytic_argmin() {
        let env = SyntheticGeometricEnv;
        for trial in 0..50u64 {
            let mut rng = stream_rng(92, trial);
            use rand::Rng;
            let p = rng.random_range(1e-4..5e-3);
            let q = rng.random_range(1e-4..5e-3);
            let kappa = rng.random_range(1.01..1.6);
            let grid = vec![16, 32, 64, 128, 256, 512, 1024, 2048];
            let stage = CurriculumStage {
                dataset: GeometricCurve { p, q },
                budget_grid: grid.clone(),
                kappa,
                b0: Some(16),
                steps: 0,
            };
            let got = select_budget(&env, &(), &stage, 16, 0).unwrap();
            let analytic = grid
                .iter()
                .copied()
                .find(|&b| {
                    geometric_success(p, q, 2 * b) <= kappa * geometric_success(p, q, b)
                })
                .unwrap_or(*grid.last().unwrap());
            assert_eq!(got.chosen, analytic, "p={p} q={q} kappa={kappa}");
        }
    }

    /// Uniform-logit policy: comfortable success rates at tiny budgets, so
    /// probe estimates are never degenerate.
    fn uniform_policy(sp: ActionSpace) -> BigramPolicy {
        BigramPolicy::from_logits(sp, vec![0.0; sp.k_standard * sp.arity()]).unwrap()
    }

    #[test]
    fn zero_step_stage_returns_input_policy() {
        let env = PkEnvironment;
        let sp = ActionSpace::new(8, 0).unwrap();
        let policy = uniform_policy(sp);
        let stage = CurriculumStage {
            dataset: sp,
            budget_grid: vec![4, 8],
            kappa: 1.2,
            b0: Some(2),
            steps: 0,
        };
        let opts = RunOptions {
            seed: 3,
            probe_rollouts: 256,
            eval_rollouts: 64,
            checkpoint_interval: 10,
        };
        let outcome =
            run_curriculum(&env, &policy, &[stage], &UpdateRule::default(), &opts).unwrap();
        assert_eq!(outcome.policy.logits(), policy.logits());
        assert_eq!(outcome.stages.len(), 1);
        assert_eq!(outcome.stages[0].series.rows.len(), 1);
    }

    #[test]
    fn curriculum_run_is_deterministic() {
        let env = PkEnvironment;
        let sp = ActionSpace::new(6, 1).unwrap();
        let policy = uniform_policy(sp);
        let stage = CurriculumStage {
            dataset: sp,
            budget_grid: vec![4, 8, 16],
            kappa: 1.2,
            b0: Some(2),
            steps: 50,
        };
        let opts = RunOptions {
            seed: 11,
            probe_rollouts: 128,
            eval_rollouts: 64,
            checkpoint_interval: 25,
        };
        let rule = UpdateRule::default();
        let a = run_curriculum(&env, &policy, std::slice::from_ref(&stage), &rule, &opts).unwrap();
        let b = run_curriculum(&env, &policy, std::slice::from_ref(&stage), &rule, &opts).unwrap();
        assert_eq!(a.policy.logits(), b.policy.logits());
        assert_eq!(a.stages[0].series, b.stages[0].series);
        assert_eq!(a.stages[0].selection, b.stages[0].selection);
    }

    #[test]
    fn baseline_fixed_identity_at_zero_steps() {
        let env = PkEnvironment;
        let sp = ActionSpace::new(6, 1).unwrap();
        let policy = BigramPolicy::init(7, sp).unwrap();
        let opts = RunOptions {
            seed: 1,
            probe_rollouts: 64,
            eval_rollouts: 64,
            checkpoint_interval: 10,
        };
        let (trained, series) =
            baseline_fixed(&env, &policy, &sp, 8, 0, &UpdateRule::default(), &opts).unwrap();
        assert_eq!(trained.logits(), policy.logits());
        assert_eq!(series.rows.len(), 1);
    }

    #[test]
    fn stage_metrics_have_one_row_per_checkpoint() {
        let env = PkEnvironment;
        let sp = ActionSpace::new(5, 0).unwrap();
        let policy = BigramPolicy::init(2, sp).unwrap();
        let opts = RunOptions {
            seed: 5,
            probe_rollouts: 64,
            eval_rollouts: 32,
            checkpoint_interval: 20,
        };
        let (_trained, series) =
            baseline_fixed(&env, &policy, &sp, 8, 45, &UpdateRule::default(), &opts).unwrap();
        // Checkpoints at 0, 20, 40, 45.
        let steps: Vec<usize> = series.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 20, 40, 45]);
    }

    /// The fused single-trajectory path must be indistinguishable from
    /// rollout + apply_update: same RNG draws, bitwise-identical logits.
    #[test]
    fn fused_train_step_matches_generic_path() {
        let sp = ActionSpace::new(12, 3).unwrap();
        let pi0 = InitialDistribution::uniform_excluding_optimal(sp);
        for (mask, seed) in [(false, 0u64), (false, 1), (true, 2), (false, 3), (true, 4)] {
            let rule = UpdateRule {
                mask_negative: mask,
                ..UpdateRule::default()
            };
            let mut fast = uniform_policy(sp);
            let mut slow = fast.clone();
            let mut rng_fast = stream_rng(seed, 0);
            let mut rng_slow = stream_rng(seed, 0);
            for _ in 0..300 {
                train_step_single(&mut fast, 25, &rule, &mut rng_fast).unwrap();

                let t = rollout(&slow, &pi0, 25, &mut rng_slow).unwrap();
                if t.len() >= 2 {
                    let adv = if t.reward > 0.0 { 1.0 } else { -1.0 };
                    apply_update(&mut slow, &t, adv, &rule).unwrap();
                }
            }
            assert_eq!(fast.logits(), slow.logits(), "mask={mask} seed={seed}");
        }
    }

    #[test]
    fn geometric_formulas_sanity() {
        // Budget 2 means exactly one policy draw.
        let j = geometric_success(0.1, 0.2, 2);
        assert!((j - 0.1).abs() < 1e-12);
        // As the budget grows, success approaches p / (p + q).
        let j = geometric_success(0.1, 0.2, 10_000);
        assert!((j - 1.0 / 3.0).abs() < 1e-9);
        assert!((geometric_mean_length(0.5, 0.5, 10) - 2.0).abs() < 1e-12);
    }
}
