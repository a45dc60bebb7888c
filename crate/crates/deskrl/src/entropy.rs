//! Entropy of softmax rows in closed form, the entropy gradient with respect
//! to logits, the alignment scalar between negative-gradient steps and the
//! entropy gradient, and an executable check that negative-advantage steps
//! on the most likely (wrong) action increase entropy.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bigram::{softmax, BigramPolicy};
use crate::error::{Error, Result};

const DIST_SUM_TOL: f64 = 1e-9;

fn validate_dist(dist: &[f64]) -> Result<()> {
    if dist.len() < 2 {
        return Err(Error::InvalidDistribution(format!(
            "arity {} too small",
            dist.len()
        )));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(
            "entries must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_SUM_TOL {
        return Err(Error::InvalidDistribution(format!("sum {sum} != 1")));
    }
    Ok(())
}

/// Shannon entropy in nats with the 0 log 0 = 0 convention, assuming a valid
/// distribution.
pub fn entropy_of(dist: &[f64]) -> f64 {
    dist.iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Shannon entropy in nats; validates the input distribution.
pub fn entropy(dist: &[f64]) -> Result<f64> {
    validate_dist(dist)?;
    Ok(entropy_of(dist))
}

/// Gradient of a state row's entropy with respect to that row's logits:
/// coordinate `j` is `-pi_j (ln pi_j + H)`. Sums to zero.
pub fn entropy_grad(policy: &BigramPolicy, state: usize) -> Result<Vec<f64>> {
    let probs = policy.action_probs(state)?;
    Ok(entropy_grad_of(&probs))
}

/// Same gradient expressed directly on a probability vector.
pub fn entropy_grad_of(probs: &[f64]) -> Vec<f64> {
    let h = entropy_of(probs);
    probs
        .iter()
        .map(|&p| if p > 0.0 { -p * (p.ln() + h) } else { 0.0 })
        .collect()
}

/// Alignment of a negative-gradient step with the entropy gradient.
///
/// For each action: `v_a = pi_a (H + ln pi_a)`, `mu` is the pi-weighted mean
/// of `v`, and `T(a) = v_a - mu` equals the inner product of the
/// advantage(-1)-scaled log-prob gradient with the entropy gradient. A
/// positive `T(a)` means a negative step on `a` raises entropy to first
/// order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub v: Vec<f64>,
    pub mu: f64,
    pub t: Vec<f64>,
    /// Most likely action.
    pub a_bar: usize,
    /// Gap between the top two probabilities.
    pub epsilon: f64,
    /// Whether `pi(a_bar) >= epsilon + exp(-H)` (equivalently the runner-up
    /// probability is at least `exp(-H)`), the regime where the
    /// quadratic-in-epsilon entropy-increase bound applies.
    pub precondition_holds: bool,
    pub entropy: f64,
}

/// Computes the alignment scalars `T(a) = v_a - mu` for every action.
pub fn alignment(dist: &[f64], a_star: usize) -> Result<AlignmentReport> {
    validate_dist(dist)?;
    if a_star >= dist.len() {
        return Err(Error::InvalidDistribution(format!(
            "a_star {a_star} outside arity {}",
            dist.len()
        )));
    }
    let h = entropy_of(dist);
    let v: Vec<f64> = dist
        .iter()
        .map(|&p| if p > 0.0 { p * (h + p.ln()) } else { 0.0 })
        .collect();
    let mu: f64 = dist.iter().zip(&v).map(|(&p, &vi)| p * vi).sum();
    let t: Vec<f64> = v.iter().map(|&vi| vi - mu).collect();

    let a_bar = argmax(dist);
    let second = dist
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != a_bar)
        .map(|(_, &p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    let epsilon = dist[a_bar] - second;
    let precondition_holds = dist[a_bar] >= epsilon + (-h).exp();

    Ok(AlignmentReport {
        v,
        mu,
        t,
        a_bar,
        epsilon,
        precondition_holds,
        entropy: h,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    let _ = xs;
    best
}

/// Outcome of one sampled negative-gradient trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub sampled: usize,
    pub sampled_argmax: bool,
    pub delta_entropy: f64,
}

/// Aggregate report from [`theorem_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub trials: usize,
    /// Trials where the sampled action was the optimal one (no negative step).
    pub optimal_sampled: usize,
    /// Trials where the sampled action was the argmax.
    pub argmax_sampled: usize,
    /// Of those, how many strictly increased entropy.
    pub argmax_entropy_increased: usize,
    /// `argmax_entropy_increased / argmax_sampled`.
    pub argmax_increase_fraction: f64,
    /// Minimum of `dH / (eta * K * eps^2 * (1 - pi(a_bar)))` over
    /// argmax-sampled trials, when the precondition holds and the
    /// denominator is positive.
    pub min_bound_ratio: Option<f64>,
    pub precondition_holds: bool,
    pub masked: bool,
    pub outcomes: Vec<TrialOutcome>,
}

/// Samples actions from `dist` and measures the exact entropy change of a
/// negative (advantage -1) logit step of size `eta` on each non-optimal
/// sample. With `masked` the step is suppressed, so the change is exactly 0
/// for every non-optimal sample.
///
/// Errors when the argmax of `dist` is the optimal action: the statement
/// under test conditions on the most likely action being wrong.
pub fn theorem_check<R: Rng>(
    dist: &[f64],
    a_star: usize,
    eta: f64,
    trials: usize,
    masked: bool,
    rng: &mut R,
) -> Result<TheoremReport> {
    validate_dist(dist)?;
    let report = alignment(dist, a_star)?;
    if report.a_bar == a_star {
        return Err(Error::ArgmaxIsOptimal);
    }
    let k_standard = dist.len() - 1;
    let h0 = report.entropy;
    let logits: Vec<f64> = dist.iter().map(|&p| p.max(1e-300).ln()).collect();

    let mut outcomes = Vec::with_capacity(trials);
    let mut optimal_sampled = 0;
    let mut argmax_sampled = 0;
    let mut argmax_increased = 0;
    let mut min_ratio: Option<f64> = None;

    for _ in 0..trials {
        let sampled = crate::bigram::sample_index(dist, rng);
        if sampled == a_star {
            optimal_sampled += 1;
            continue;
        }
        let delta = if masked {
            0.0
        } else {
            negative_step_entropy_delta(&logits, dist, sampled, eta) - h0
        };
        let is_argmax = sampled == report.a_bar;
        if is_argmax {
            argmax_sampled += 1;
            if delta > 0.0 {
                argmax_increased += 1;
            }
            if !masked && report.precondition_holds {
                let denom =
                    eta * k_standard as f64 * report.epsilon.powi(2) * (1.0 - dist[report.a_bar]);
                if denom > 0.0 {
                    let ratio = delta / denom;
                    min_ratio = Some(match min_ratio {
                        Some(m) => m.min(ratio),
                        None => ratio,
                    });
                }
            }
        }
        outcomes.push(TrialOutcome {
            sampled,
            sampled_argmax: is_argmax,
            delta_entropy: delta,
        });
    }

    Ok(TheoremReport {
        trials,
        optimal_sampled,
        argmax_sampled,
        argmax_entropy_increased: argmax_increased,
        argmax_increase_fraction: if argmax_sampled > 0 {
            argmax_increased as f64 / argmax_sampled as f64
        } else {
            0.0
        },
        min_bound_ratio: min_ratio,
        precondition_holds: report.precondition_holds,
        masked,
        outcomes,
    })
}

/// Aggregate results of the randomized entropy-increase battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub distributions: usize,
    pub eta: f64,
    /// Distributions where the forced negative step on the argmax strictly
    /// increased entropy.
    pub argmax_increases: usize,
    /// Masked trials with a non-optimal sample whose entropy change was not
    /// exactly zero (must stay 0).
    pub masked_nonzero: usize,
    pub masked_trials: usize,
    /// Distributions satisfying `pi(argmax) >= eps + exp(-H)`.
    pub precondition_count: usize,
    /// Minimum of `dH / (eta K eps^2 (1 - pi(argmax)))` over that subset.
    pub min_bound_ratio: Option<f64>,
    pub min_delta_entropy: f64,
}

/// Randomized check of the entropy-increase statement: for each sampled
/// softmax distribution (argmax forced away from the optimal action), apply
/// one negative step of size `eta` to the argmax and measure the exact
/// entropy change. Also verifies that masked negative steps leave entropy
/// exactly unchanged on non-optimal samples.
pub fn run_battery(distributions: usize, eta: f64, seed: u64) -> BatteryReport {
    let mut argmax_increases = 0;
    let mut precondition_count = 0;
    let mut min_ratio: Option<f64> = None;
    let mut min_delta = f64::INFINITY;
    let mut masked_nonzero = 0;
    let mut masked_trials = 0;

    for trial in 0..distributions {
        let mut rng = crate::seeding::stream_rng(seed, trial as u64);
        let arity = 3 + trial % 99; // 3..=101, the policy-family sizes
        let logits: Vec<f64> = (0..arity).map(|_| rng.random_range(-3.0..=3.0)).collect();
        let dist = softmax(&logits);
        let report = alignment(&dist, 0).expect("softmax rows are valid distributions");
        let a_bar = report.a_bar;
        // Any non-argmax index works as the optimal action.
        let a_star = if a_bar == 0 { 1 } else { 0 };

        // Conditional event: the argmax was sampled; exact entropy change.
        let delta = negative_step_entropy_delta(&logits, &dist, a_bar, eta) - report.entropy;
        if delta > 0.0 {
            argmax_increases += 1;
        }
        min_delta = min_delta.min(delta);
        if report.precondition_holds && report.epsilon > 0.0 && dist[a_bar] < 1.0 {
            precondition_count += 1;
            let denom =
                eta * (arity - 1) as f64 * report.epsilon.powi(2) * (1.0 - dist[a_bar]);
            let ratio = delta / denom;
            min_ratio = Some(match min_ratio {
                Some(m) => m.min(ratio),
                None => ratio,
            });
        }

        // Masked control: one on-policy sample, step suppressed.
        let check = theorem_check(&dist, a_star, eta, 1, true, &mut rng)
            .expect("argmax differs from a_star by construction");
        for outcome in &check.outcomes {
            masked_trials += 1;
            if outcome.delta_entropy != 0.0 {
                masked_nonzero += 1;
            }
        }
    }

    BatteryReport {
        distributions,
        eta,
        argmax_increases,
        masked_nonzero,
        masked_trials,
        precondition_count,
        min_bound_ratio: min_ratio,
        min_delta_entropy: min_delta,
    }
}

/// Entropy after one negative (advantage -1) step of size `eta` on `action`.
pub fn negative_step_entropy_delta(logits: &[f64], probs: &[f64], action: usize, eta: f64) -> f64 {
    let updated: Vec<f64> = logits
        .iter()
        .enumerate()
        .map(|(b, &l)| {
            let g = if b == action { 1.0 - probs[b] } else { -probs[b] };
            l - eta * g
        })
        .collect();
    entropy_of(&softmax(&updated))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bigram::ActionSpace;
    use rand::Rng;

    #[test]
    fn entropy_uniform_and_onehot() {
        let h = entropy(&[0.25; 4]).unwrap();
        assert!((h - 4.0_f64.ln()).abs() < 1e-15);
        let h = entropy(&[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(h, 0.0);
    }

    /// Frozen from an independent high-precision evaluation of
    /// -(0.9 ln 0.9 + 0.1 ln 0.1).
    #[test]
    fn entropy_two_point_reference_value() {
        let h = entropy(&[0.9, 0.1]).unwrap();
        assert!((h - 0.325082973391448).abs() < 1e-14);
    }

    #[test]
    fn entropy_rejects_invalid_distributions() {
        assert!(entropy(&[0.5, 0.6]).is_err());
        assert!(entropy(&[-0.1, 1.1]).is_err());
        assert!(entropy(&[f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn entropy_grad_uniform_row_is_zero() {
        let sp = ActionSpace::new(3, 0).unwrap();
        let policy =
            BigramPolicy::from_logits(sp, vec![0.0; sp.k_standard * sp.arity()]).unwrap();
        let g = entropy_grad(&policy, 0).unwrap();
        for v in &g {
            assert!(v.abs() < 1e-15);
        }
    }

    /// A coordinate with pi_j = exp(-H) has zero entropy gradient.
    #[test]
    fn entropy_grad_zero_at_exp_minus_h() {
        // dist (0.7, 0.2, 0.1): H = 0.8018...; exp(-H) = 0.4485... Build a
        // 4-way dist where one coordinate equals exp(-H) by construction:
        // p = (x, ...) with x = exp(-H(p)). Solve numerically by iteration.
        let mut x = 0.3;
        for _ in 0..200 {
            let rest = (1.0 - x) / 3.0;
            let dist = [x, rest, rest, rest];
            x = (-entropy_of(&dist)).exp();
        }
        let rest = (1.0 - x) / 3.0;
        let dist = [x, rest, rest, rest];
        let g = entropy_grad_of(&dist);
        assert!(g[0].abs() < 1e-9, "grad {g:?}");
    }

    #[test]
    fn entropy_grad_matches_finite_differences() {
        for trial in 0..200u64 {
            let k = 2 + (trial % 9) as usize;
            let sp = ActionSpace::new(k, 0).unwrap();
            let policy = BigramPolicy::init(trial, sp).unwrap();
            let state = (trial as usize) % k;
            let analytic = entropy_grad(&policy, state).unwrap();
            let eps = 1e-6;
            for b in 0..sp.arity() {
                let mut plus = policy.clone();
                plus.row_mut(state)[b] += eps;
                let mut minus = policy.clone();
                minus.row_mut(state)[b] -= eps;
                let fd = (entropy_of(&plus.action_probs(state).unwrap())
                    - entropy_of(&minus.action_probs(state).unwrap()))
                    / (2.0 * eps);
                let denom = analytic[b].abs().max(1e-3);
                assert!(
                    (analytic[b] - fd).abs() / denom < 1e-6,
                    "coord {b}: {} vs {}",
                    analytic[b],
                    fd
                );
            }
        }
    }

    #[test]
    fn gradients_orthogonal_to_all_ones() {
        for trial in 0..100u64 {
            let sp = ActionSpace::new(5, 1).unwrap();
            let policy = BigramPolicy::init(trial, sp).unwrap();
            let ge = entropy_grad(&policy, 2).unwrap();
            let gl = crate::update::log_prob_grad(&policy, 2, 4).unwrap();
            assert!(ge.iter().sum::<f64>().abs() < 1e-12);
            assert!(gl.iter().sum::<f64>().abs() < 1e-12);
        }
    }

    #[test]
    fn alignment_uniform_is_zero() {
        let report = alignment(&[0.25; 4], 0).unwrap();
        for t in &report.t {
            assert!(t.abs() < 1e-15);
        }
        assert!(report.mu.abs() < 1e-15);
    }

    /// T values equal the inner product of the advantage(-1)-scaled log-prob
    /// gradient with the entropy gradient, computed from the closed forms.
    #[test]
    fn alignment_matches_inner_product_oracle() {
        let dist = [0.7, 0.2, 0.1];
        let report = alignment(&dist, 2).unwrap();
        let ge = entropy_grad_of(&dist);
        for a in 0..dist.len() {
            // advantage -1 times grad log pi(a).
            let inner: f64 = (0..dist.len())
                .map(|b| {
                    let g = if b == a { 1.0 - dist[b] } else { -dist[b] };
                    -g * ge[b]
                })
                .sum();
            assert!(
                (report.t[a] - inner).abs() < 1e-12,
                "action {a}: T {} vs inner {}",
                report.t[a],
                inner
            );
        }
    }

    #[test]
    fn alignment_t_of_argmax_nonnegative() {
        for trial in 0..2000u64 {
            let arity = 3 + (trial % 30) as usize;
            let mut rng = crate::seeding::stream_rng(50, trial);
            let logits: Vec<f64> = (0..arity).map(|_| rng.random_range(-3.0..=3.0)).collect();
            let dist = softmax(&logits);
            let report = alignment(&dist, 0).unwrap();
            if dist[report.a_bar] >= 1.0 / arity as f64 {
                assert!(report.t[report.a_bar] >= -1e-15);
            }
        }
    }

    /// mu is the pi-mean of v, so sum_i pi_i T(i) = 0 for every distribution.
    #[test]
    fn alignment_pi_weighted_t_is_zero() {
        for trial in 0..2000u64 {
            let arity = 2 + (trial % 40) as usize;
            let mut rng = crate::seeding::stream_rng(51, trial);
            let logits: Vec<f64> = (0..arity).map(|_| rng.random_range(-5.0..=5.0)).collect();
            let dist = softmax(&logits);
            let report = alignment(&dist, 0).unwrap();
            let weighted: f64 = dist.iter().zip(&report.t).map(|(&p, &t)| p * t).sum();
            assert!(weighted.abs() < 1e-12);
        }
    }

    #[test]
    fn theorem_check_rejects_optimal_argmax() {
        let dist = [0.6, 0.3, 0.1];
        let mut rng = crate::seeding::seeded_rng(1);
        assert!(matches!(
            theorem_check(&dist, 0, 1e-4, 10, false, &mut rng),
            Err(Error::ArgmaxIsOptimal)
        ));
    }

    #[test]
    fn negative_step_on_argmax_increases_entropy() {
        let dist = [0.6, 0.3, 0.1];
        let h0 = entropy_of(&dist);
        let logits: Vec<f64> = dist.iter().map(|p| p.ln()).collect();
        let h1 = negative_step_entropy_delta(&logits, &dist, 0, 1e-4);
        assert!(h1 > h0);
    }

    #[test]
    fn masked_steps_leave_entropy_unchanged() {
        let dist = [0.6, 0.3, 0.1];
        let mut rng = crate::seeding::seeded_rng(2);
        let report = theorem_check(&dist, 2, 1e-4, 500, true, &mut rng).unwrap();
        for o in &report.outcomes {
            assert_eq!(o.delta_entropy, 0.0);
        }
        assert!(report.masked);
    }

    #[test]
    fn theorem_check_reports_positive_bound_ratio() {
        // Precondition: runner-up prob >= exp(-H).
        let dist = [0.5, 0.4, 0.1];
        let report = alignment(&dist, 2).unwrap();
        assert!(report.precondition_holds);
        let mut rng = crate::seeding::seeded_rng(3);
        let check = theorem_check(&dist, 2, 1e-4, 2000, false, &mut rng).unwrap();
        assert!(check.argmax_sampled > 0);
        assert_eq!(check.argmax_increase_fraction, 1.0);
        assert!(check.min_bound_ratio.unwrap() > 0.0);
    }
}
