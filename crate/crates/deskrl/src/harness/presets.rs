//! Named experiment presets. Each resolves to a full `RunConfig`; step
//! counts are sized so every preset finishes on a small desk machine.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::config::{
    CountdownConfig, EnvKind, PkConfig, RunConfig, StageConfig, SyntheticJConfig, TheoremConfig,
};
use crate::update::UpdateRule;

/// A preset name with a one-line description.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Preset {
    pub name: String,
    pub description: String,
}

/// Update budget for the length-growth dynamics presets (fig. 7 panels).
pub const FIG7_STEPS: usize = 300_000;

/// Stage update budgets for the two-stage curriculum presets.
pub const CURRICULUM_STAGE1_STEPS: usize = 60_000;
pub const CURRICULUM_STAGE2_STEPS: usize = 60_000;

fn fig7_base(name: &str, mask: bool) -> RunConfig {
    RunConfig {
        name: name.to_string(),
        seed: Some(2025),
        environment: EnvKind::Pk,
        out_dir: PathBuf::from(format!("runs/{name}")),
        workers: 0,
        steps: FIG7_STEPS,
        checkpoint_interval: 10_000,
        eval_rollouts: 256,
        probe_rollouts: 1024,
        update: UpdateRule {
            mask_negative: mask,
            ..UpdateRule::default()
        },
        pk: Some(PkConfig {
            k_standard: 100,
            a_star: 0,
            budget: 100,
        }),
        stages: Vec::new(),
        synthetic_j: None,
        countdown: None,
        theorem: None,
    }
}

fn curriculum_stages(first_k: usize, second_k: usize) -> Vec<StageConfig> {
    vec![
        StageConfig {
            k_standard: first_k,
            budget_grid: vec![4, 8, 16, 32, 64],
            kappa: 1.2,
            b0: None,
            steps: CURRICULUM_STAGE1_STEPS,
        },
        StageConfig {
            k_standard: second_k,
            budget_grid: vec![4, 8, 16, 32, 64],
            kappa: 1.2,
            b0: None,
            steps: CURRICULUM_STAGE2_STEPS,
        },
    ]
}

fn curriculum_base(name: &str, stages: Vec<StageConfig>) -> RunConfig {
    RunConfig {
        name: name.to_string(),
        seed: Some(7),
        environment: EnvKind::Pk,
        out_dir: PathBuf::from(format!("runs/{name}")),
        workers: 0,
        steps: 0,
        checkpoint_interval: 5_000,
        eval_rollouts: 512,
        probe_rollouts: 2048,
        update: UpdateRule::default(),
        pk: Some(PkConfig {
            k_standard: stages.last().map(|s| s.k_standard).unwrap_or(2),
            a_star: 0,
            budget: 64,
        }),
        stages,
        synthetic_j: None,
        countdown: None,
        theorem: None,
    }
}

fn baseline_base(name: &str, budget: usize) -> RunConfig {
    let mut config = curriculum_base(name, Vec::new());
    config.pk = Some(PkConfig {
        k_standard: 30,
        a_star: 0,
        budget,
    });
    config.steps = CURRICULUM_STAGE1_STEPS + CURRICULUM_STAGE2_STEPS;
    config
}

/// All built-in presets.
pub fn list_presets() -> Vec<Preset> {
    let entries = [
        (
            "fig7-grpo",
            "Bigram-MDP training with negative gradients (fig. 7 analog): \
             length rises, stop probability falls, entropy rises then collapses.",
        ),
        (
            "fig7-mask",
            "Same run with negative gradients masked (fig. 7(b) analog): \
             reward, length, and stop probability stay flat.",
        ),
        (
            "fig5-unique",
            "Countdown trace-analytics pipeline (fig. 5 analog): cumulative \
             unique attempts over a deterministic fixture corpus.",
        ),
        (
            "fig8c-budget-select",
            "Doubling-probe budget selection on the closed-form success curve \
             (fig. 8(c) analog): picks 1024 as the smallest budget within kappa 1.2.",
        ),
        (
            "curriculum-coupled",
            "Two-stage coupled data+budget curriculum on the bigram MDP \
             (fig. 8(a) analog), budgets chosen per stage by the doubling probe.",
        ),
        (
            "curriculum-budget-only",
            "Budget-curriculum baseline: same budget schedule but the hard \
             dataset from the start (fig. 8(a) analog).",
        ),
        (
            "baseline-fixed-short",
            "Fixed short-budget baseline on the hard dataset (fig. 6(c) analog): \
             stops early, reward stays near zero.",
        ),
        (
            "baseline-fixed-long",
            "Fixed long-budget baseline on the hard dataset (fig. 8(a) analog).",
        ),
        (
            "theorem-suite",
            "Gradient finite-difference oracles and the negative-gradient \
             entropy-increase battery (thm. 4.1 analog).",
        ),
    ];
    entries
        .iter()
        .map(|(name, description)| Preset {
            name: name.to_string(),
            description: description.to_string(),
        })
        .collect()
}

/// Resolves a preset name to its configuration.
pub fn preset_config(name: &str) -> Option<RunConfig> {
    let config = match name {
        "fig7-grpo" => fig7_base("fig7-grpo", false),
        "fig7-mask" => fig7_base("fig7-mask", true),
        "fig5-unique" => RunConfig {
            name: "fig5-unique".into(),
            seed: Some(11),
            environment: EnvKind::CountdownAnalytics,
            out_dir: PathBuf::from("runs/fig5-unique"),
            steps: 30,
            checkpoint_interval: 1,
            countdown: Some(CountdownConfig {
                difficulty: 4,
                problems: 12,
                traces_per_step: 8,
                value_max: 49,
                target_max: 999,
            }),
            ..RunConfig::default()
        },
        "fig8c-budget-select" => RunConfig {
            name: "fig8c-budget-select".into(),
            seed: Some(3),
            environment: EnvKind::SyntheticJ,
            out_dir: PathBuf::from("runs/fig8c-budget-select"),
            synthetic_j: Some(SyntheticJConfig {
                p: 0.0012,
                q: 0.0012,
                budget_grid: vec![256, 512, 1024, 2048],
                kappa: 1.2,
                b0: 256,
            }),
            ..RunConfig::default()
        },
        "curriculum-coupled" => curriculum_base("curriculum-coupled", curriculum_stages(10, 30)),
        "curriculum-budget-only" => {
            curriculum_base("curriculum-budget-only", curriculum_stages(30, 30))
        }
        "baseline-fixed-short" => baseline_base("baseline-fixed-short", 4),
        "baseline-fixed-long" => baseline_base("baseline-fixed-long", 64),
        "theorem-suite" => RunConfig {
            name: "theorem-suite".into(),
            seed: Some(17),
            environment: EnvKind::TheoremSuite,
            out_dir: PathBuf::from("runs/theorem-suite"),
            theorem: Some(TheoremConfig {
                gradient_rows: 1000,
                distributions: 10_000,
                eta: 1e-4,
            }),
            ..RunConfig::default()
        },
        _ => return None,
    };
    Some(config)
}
