//! The theorem-suite runner: finite-difference gradient oracles plus the
//! randomized entropy-increase battery.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bigram::{ActionSpace, BigramPolicy};
use crate::entropy::{self, entropy_of, BatteryReport};
use crate::error::Result;
use crate::update::log_prob_grad;

/// Worst relative errors of the closed-form gradients against central
/// finite differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub rows: usize,
    pub epsilon: f64,
    pub max_rel_error_entropy: f64,
    pub max_rel_error_log_prob: f64,
}

/// Combined theorem-suite output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub gradient_check: GradientCheckReport,
    pub battery: BatteryReport,
}

/// Relative error with a floor that keeps near-zero coordinates from
/// blowing up the ratio.
fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1e-3)
}

/// Checks both closed-form gradients against central finite differences on
/// random logit rows with arities cycling over `3..=max_arity`.
pub fn gradient_check_sweep(rows: usize, max_arity: usize, seed: u64) -> Result<GradientCheckReport> {
    let eps = 1e-6;
    let mut max_entropy_err = 0.0_f64;
    let mut max_log_prob_err = 0.0_f64;
    for trial in 0..rows {
        let arity = 3 + trial % (max_arity - 2);
        let k_standard = arity - 1;
        let sp = ActionSpace::new(k_standard, 0)?;
        let mut rng = crate::seeding::stream_rng(seed, trial as u64);
        let logits: Vec<f64> = (0..k_standard * arity)
            .map(|_| rng.random_range(-3.0..=3.0))
            .collect();
        let mut policy = BigramPolicy::from_logits(sp, logits)?;
        let state = trial % k_standard;
        let action = rng.random_range(0..arity);

        let entropy_grad = entropy::entropy_grad(&policy, state)?;
        let log_grad = log_prob_grad(&policy, state, action)?;
        for b in 0..arity {
            // Perturb one coordinate in place; restore exactly afterwards.
            let original = policy.row(state)[b];
            policy.row_mut(state)[b] = original + eps;
            let h_plus = entropy_of(&policy.action_probs(state)?);
            let lp_plus = policy.log_prob(state, action)?;
            policy.row_mut(state)[b] = original - eps;
            let h_minus = entropy_of(&policy.action_probs(state)?);
            let lp_minus = policy.log_prob(state, action)?;
            policy.row_mut(state)[b] = original;

            let fd_entropy = (h_plus - h_minus) / (2.0 * eps);
            max_entropy_err = max_entropy_err.max(rel_error(entropy_grad[b], fd_entropy));
            let fd_log = (lp_plus - lp_minus) / (2.0 * eps);
            max_log_prob_err = max_log_prob_err.max(rel_error(log_grad[b], fd_log));
        }
    }
    Ok(GradientCheckReport {
        rows,
        epsilon: eps,
        max_rel_error_entropy: max_entropy_err,
        max_rel_error_log_prob: max_log_prob_err,
    })
}

/// Runs the full suite: gradient sweep plus the entropy-increase battery.
pub fn run_suite(
    gradient_rows: usize,
    distributions: usize,
    eta: f64,
    seed: u64,
) -> Result<SuiteReport> {
    Ok(SuiteReport {
        gradient_check: gradient_check_sweep(gradient_rows, 200, seed)?,
        battery: entropy::run_battery(distributions, eta, crate::seeding::derive_seed(seed, 1)),
    })
}
