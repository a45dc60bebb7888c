//! Estimators and run statistics: exact and bootstrapped pass@k, KL
//! divergence to a base policy, and per-checkpoint training summaries.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bigram::{BigramPolicy, Trajectory};
use crate::entropy::entropy_of;
use crate::error::{Error, Result};

/// Per-problem rollout outcomes: `n` rollouts, `c` successes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProblemOutcome {
    pub id: String,
    pub n: usize,
    pub c: usize,
}

/// Rollout outcomes for a set of problems.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OutcomeMatrix {
    pub problems: Vec<ProblemOutcome>,
}

impl OutcomeMatrix {
    pub fn validate(&self) -> Result<()> {
        for p in &self.problems {
            if p.c > p.n {
                return Err(Error::InvalidCounts { c: p.c, n: p.n });
            }
        }
        Ok(())
    }

    pub fn min_n(&self) -> usize {
        self.problems.iter().map(|p| p.n).min().unwrap_or(0)
    }
}

/// Unbiased pass@k: `1 - C(n-c, k) / C(n, k)`, the probability that a
/// uniformly chosen k-subset of the n rollouts contains a success.
///
/// Exact integer binomials are used for n <= 64; larger n switches to
/// log-gamma differences with a final exp.
pub fn pass_at_k(n: usize, c: usize, k: usize) -> Result<f64> {
    if c > n {
        return Err(Error::InvalidCounts { c, n });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    if n - c < k {
        return Ok(1.0);
    }
    if k == 1 {
        // 1 - (n-c)/n definitionally; keeps pass@1 = c/n exact for all n.
        return Ok(c as f64 / n as f64);
    }
    if n <= 64 {
        // Exact rational: single correctly-rounded division of exact
        // integers. C(64, 32) < 2^61 fits comfortably in u128.
        let total = binomial_u128(n, k);
        let failing = binomial_u128(n - c, k);
        Ok((total - failing) as f64 / total as f64)
    } else {
        let log_ratio = ln_binomial(n - c, k) - ln_binomial(n, k);
        Ok(1.0 - log_ratio.exp())
    }
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 0..k {
        result = result * (n - i) as u128 / (i + 1) as u128
    }
    result
}

/// ln C(n, k) via exact log-gamma at integer arguments:
/// lnGamma(n + 1) = sum_{i=1..n} ln i.
fn ln_binomial(n: usize, k: usize) -> f64 {
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|i| (i as f64).ln()).sum()
}

/// Bootstrap estimate of mean pass@k over problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapEstimate {
    pub mean: f64,
    /// 2.5th percentile of the bootstrap replicates.
    pub lo: f64,
    /// 97.5th percentile of the bootstrap replicates.
    pub hi: f64,
    pub resamples: usize,
}

/// Bootstrapped pass@k: each replicate draws one k-subset per problem
/// without replacement, scores it 1 if it contains a success, and averages
/// the indicators over problems. The replicate mean converges to the exact
/// estimator average as resamples grow.
pub fn bootstrap_pass_at_k(
    outcomes: &OutcomeMatrix,
    k: usize,
    resamples: usize,
    seed: u64,
) -> Result<BootstrapEstimate> {
    outcomes.validate()?;
    if resamples < 100 {
        return Err(Error::Config(format!(
            "need at least 100 resamples, got {resamples}"
        )));
    }
    if outcomes.problems.is_empty() {
        return Err(Error::Config("outcome matrix is empty".into()));
    }
    let min_n = outcomes.min_n();
    if k == 0 || k > min_n {
        return Err(Error::InvalidK { k, n: min_n });
    }

    let mut replicates = Vec::with_capacity(resamples);
    for r in 0..resamples {
        let mut rng = crate::seeding::stream_rng(seed, r as u64);
        let mut hits = 0usize;
        for p in &outcomes.problems {
            if subset_contains_success(p.n, p.c, k, &mut rng) {
                hits += 1;
            }
        }
        replicates.push(hits as f64 / outcomes.problems.len() as f64);
    }

    let mean = replicates.iter().sum::<f64>() / resamples as f64;
    let mut sorted = replicates;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(BootstrapEstimate {
        mean,
        lo: percentile(&sorted, 0.025),
        hi: percentile(&sorted, 0.975),
        resamples,
    })
}

/// Draws a k-subset of n rollouts (c of them successes) without replacement
/// and reports whether it contains at least one success.
fn subset_contains_success<R: Rng>(n: usize, c: usize, k: usize, rng: &mut R) -> bool {
    let remaining_success = c;
    let mut remaining_total = n;
    for _ in 0..k {
        if remaining_success == 0 {
            return false;
        }
        let u: f64 = rng.random();
        if u < remaining_success as f64 / remaining_total as f64 {
            return true;
        }
        remaining_total -= 1;
    }
    false
}

/// Nearest-rank percentile of a sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// State-weighted KL divergence between two policies over the same action
/// space: `sum_s w(s) KL(pi(.|s) || base(.|s))`.
///
/// Returns +infinity when the base assigns zero probability where the
/// policy does not (softmax rows never do, but weights may cover arbitrary
/// distributions).
pub fn kl_to_base(
    policy: &BigramPolicy,
    base_policy: &BigramPolicy,
    state_weights: &[f64],
) -> Result<f64> {
    if policy.space() != base_policy.space() {
        return Err(Error::InvalidSpace(
            "policy and base must share an action space".into(),
        ));
    }
    let k = policy.space().k_standard;
    if state_weights.len() != k {
        return Err(Error::InvalidDistribution(format!(
            "need {k} state weights, got {}",
            state_weights.len()
        )));
    }
    let sum: f64 = state_weights.iter().sum();
    if state_weights.iter().any(|w| *w < 0.0 || !w.is_finite()) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidDistribution(
            "state weights must form a distribution".into(),
        ));
    }

    let mut total = 0.0;
    for state in 0..k {
        let w = state_weights[state];
        if w == 0.0 {
            continue;
        }
        let p = policy.action_probs(state)?;
        let q = base_policy.action_probs(state)?;
        let mut kl = 0.0;
        for (pi, qi) in p.iter().zip(&q) {
            if *pi > 0.0 {
                if *qi == 0.0 {
                    return Ok(f64::INFINITY);
                }
                kl += pi * (pi / qi).ln();
            }
        }
        total += w * kl.max(0.0);
    }
    Ok(total)
}

/// One checkpoint row of a training series. Countdown-backed columns are
/// None for runs without trace analytics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSeriesRow {
    pub step: usize,
    pub reward: f64,
    pub length: f64,
    pub p_stop: Option<f64>,
    pub entropy: Option<f64>,
    pub kl: Option<f64>,
    pub unique_attempts: Option<usize>,
    pub chained_mean: Option<f64>,
}

/// A training series: one row per checkpoint, strictly increasing steps.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunSeries {
    pub rows: Vec<RunSeriesRow>,
}

/// CSV header used for every emitted series file.
pub const SERIES_HEADER: &str = "step,reward,length,p_stop,entropy,kl,unique_attempts,chained_mean";

impl RunSeries {
    pub fn push(&mut self, row: RunSeriesRow) {
        debug_assert!(self
            .rows
            .last()
            .map(|last| row.step > last.step)
            .unwrap_or(true));
        self.rows.push(row);
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if w[1].step <= w[0].step {
                return Err(Error::Config("series steps must strictly increase".into()));
            }
        }
        for row in &self.rows {
            let opt_finite =
                |v: Option<f64>| v.map(|x| x.is_finite()).unwrap_or(true);
            let finite = row.reward.is_finite()
                && row.length.is_finite()
                && opt_finite(row.p_stop)
                && opt_finite(row.entropy)
                && opt_finite(row.kl);
            if !finite {
                return Err(Error::Config(format!(
                    "non-finite series entry at step {}",
                    row.step
                )));
            }
        }
        Ok(())
    }

    /// Lossless CSV: floats use the shortest round-trip representation.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SERIES_HEADER);
        out.push('\n');
        let fmt_opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            let unique = row
                .unique_attempts
                .map(|u| u.to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                row.step,
                row.reward,
                row.length,
                fmt_opt(row.p_stop),
                fmt_opt(row.entropy),
                fmt_opt(row.kl),
                unique,
                fmt_opt(row.chained_mean)
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(header) if header == SERIES_HEADER => {}
            other => {
                return Err(Error::Config(format!("bad series header: {other:?}")));
            }
        }
        let mut rows = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(Error::Config(format!("bad series row: {line}")));
            }
            let parse_f = |s: &str| -> Result<f64> {
                s.parse()
                    .map_err(|e| Error::Config(format!("bad float '{s}': {e}")))
            };
            let parse_opt = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_f(s).map(Some)
                }
            };
            rows.push(RunSeriesRow {
                step: fields[0]
                    .parse()
                    .map_err(|e| Error::Config(format!("bad step: {e}")))?,
                reward: parse_f(fields[1])?,
                length: parse_f(fields[2])?,
                p_stop: parse_opt(fields[3])?,
                entropy: parse_opt(fields[4])?,
                kl: parse_opt(fields[5])?,
                unique_attempts: if fields[6].is_empty() {
                    None
                } else {
                    Some(
                        fields[6]
                            .parse()
                            .map_err(|e| Error::Config(format!("bad count: {e}")))?,
                    )
                },
                chained_mean: parse_opt(fields[7])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Summarizes a checkpoint rollout batch into one series row.
///
/// Stop probability and row entropy are visitation-weighted means over the
/// states the batch visited; the same visitation weights drive the KL term.
pub fn summarize(
    step: usize,
    batch: &[Trajectory],
    policy: &BigramPolicy,
    base_policy: &BigramPolicy,
) -> Result<RunSeriesRow> {
    if batch.is_empty() {
        return Err(Error::Config("checkpoint batch is empty".into()));
    }
    let k = policy.space().k_standard;
    let mut visits = vec![0usize; k];
    let mut reward_sum = 0.0;
    let mut length_sum = 0usize;
    for t in batch {
        reward_sum += t.reward;
        length_sum += t.len();
        // States are the actions that had a successor drawn.
        for &state in &t.actions[..t.len().saturating_sub(1)] {
            visits[state] += 1;
        }
    }
    let total_visits: usize = visits.iter().sum();
    let weights: Vec<f64> = if total_visits == 0 {
        vec![1.0 / k as f64; k]
    } else {
        visits
            .iter()
            .map(|&v| v as f64 / total_visits as f64)
            .collect()
    };

    let mut p_stop = 0.0;
    let mut mean_entropy = 0.0;
    for state in 0..k {
        if weights[state] == 0.0 {
            continue;
        }
        let probs = policy.action_probs(state)?;
        p_stop += weights[state] * probs[policy.space().stop()];
        mean_entropy += weights[state] * entropy_of(&probs);
    }

    Ok(RunSeriesRow {
        step,
        reward: reward_sum / batch.len() as f64,
        length: length_sum as f64 / batch.len() as f64,
        p_stop: Some(p_stop),
        entropy: Some(mean_entropy),
        kl: Some(kl_to_base(policy, base_policy, &weights)?),
        unique_attempts: None,
        chained_mean: None,
    })
}
