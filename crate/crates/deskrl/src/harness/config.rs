//! Run configuration: a flat, diff-friendly `key = value` text format with
//! bracketed sections. Parsing and serialization round-trip exactly, and
//! `validate` reports every violation rather than stopping at the first.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::update::{AdvantageScheme, UpdateRule};

/// Which machinery a run drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    /// Bigram-MDP training.
    Pk,
    /// Trace analytics over a deterministic Countdown fixture corpus.
    CountdownAnalytics,
    /// Closed-form success curve for budget selection.
    SyntheticJ,
    /// Gradient oracles and the entropy-increase check battery.
    TheoremSuite,
}

impl EnvKind {
    fn as_str(&self) -> &'static str {
        match self {
            EnvKind::Pk => "pk",
            EnvKind::CountdownAnalytics => "countdown-analytics",
            EnvKind::SyntheticJ => "synthetic-j",
            EnvKind::TheoremSuite => "theorem-suite",
        }
    }

    fn parse(text: &str) -> Option<Self> {
        match text {
            "pk" => Some(EnvKind::Pk),
            "countdown-analytics" => Some(EnvKind::CountdownAnalytics),
            "synthetic-j" => Some(EnvKind::SyntheticJ),
            "theorem-suite" => Some(EnvKind::TheoremSuite),
            _ => None,
        }
    }
}

/// Bigram-MDP parameters for fixed-budget runs and as stage defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PkConfig {
    pub k_standard: usize,
    pub a_star: usize,
    pub budget: usize,
}

/// One curriculum stage in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub k_standard: usize,
    pub budget_grid: Vec<usize>,
    pub kappa: f64,
    /// None means "auto": the incoming policy's mean rollout length.
    pub b0: Option<usize>,
    pub steps: usize,
}

/// Closed-form curve parameters for synthetic-J runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticJConfig {
    pub p: f64,
    pub q: f64,
    pub budget_grid: Vec<usize>,
    pub kappa: f64,
    pub b0: usize,
}

/// Fixture-corpus parameters for countdown-analytics runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountdownConfig {
    pub difficulty: usize,
    pub problems: usize,
    pub traces_per_step: usize,
    pub value_max: i64,
    pub target_max: i64,
}

/// Trial counts for the theorem suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConfig {
    pub gradient_rows: usize,
    pub distributions: usize,
    pub eta: f64,
}

/// A fully described run. `seed` is optional only so that `validate` can
/// report its absence; `run` requires it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub name: String,
    pub seed: Option<u64>,
    pub environment: EnvKind,
    pub out_dir: PathBuf,
    /// 0 means all available cores.
    pub workers: usize,
    pub steps: usize,
    pub checkpoint_interval: usize,
    pub eval_rollouts: usize,
    pub probe_rollouts: usize,
    pub update: UpdateRule,
    pub pk: Option<PkConfig>,
    pub stages: Vec<StageConfig>,
    pub synthetic_j: Option<SyntheticJConfig>,
    pub countdown: Option<CountdownConfig>,
    pub theorem: Option<TheoremConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            seed: None,
            environment: EnvKind::Pk,
            out_dir: PathBuf::from("runs/out"),
            workers: 0,
            steps: 0,
            checkpoint_interval: 200,
            eval_rollouts: 256,
            probe_rollouts: 1024,
            update: UpdateRule::default(),
            pk: None,
            stages: Vec::new(),
            synthetic_j: None,
            countdown: None,
            theorem: None,
        }
    }
}

fn scheme_str(scheme: AdvantageScheme) -> &'static str {
    match scheme {
        AdvantageScheme::Binary => "binary",
        AdvantageScheme::GroupCentered => "group_centered",
        AdvantageScheme::GroupNormalized => "group_normalized",
    }
}

fn parse_scheme(text: &str) -> Option<AdvantageScheme> {
    match text {
        "binary" => Some(AdvantageScheme::Binary),
        "group_centered" => Some(AdvantageScheme::GroupCentered),
        "group_normalized" => Some(AdvantageScheme::GroupNormalized),
        _ => None,
    }
}

fn join_grid(grid: &[usize]) -> String {
    grid.iter()
        .map(|b| b.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Canonical text form; `parse` of the output reproduces the config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "[run]");
        let _ = writeln!(out, "name = {}", self.name);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed = {seed}");
        }
        let _ = writeln!(out, "environment = {}", self.environment.as_str());
        let _ = writeln!(out, "out = {}", self.out_dir.display());
        let _ = writeln!(out, "workers = {}", self.workers);
        let _ = writeln!(out, "steps = {}", self.steps);
        let _ = writeln!(out, "checkpoint_interval = {}", self.checkpoint_interval);
        let _ = writeln!(out, "eval_rollouts = {}", self.eval_rollouts);
        let _ = writeln!(out, "probe_rollouts = {}", self.probe_rollouts);

        let _ = writeln!(out, "\n[update]");
        let _ = writeln!(out, "learning_rate = {}", self.update.learning_rate);
        let _ = writeln!(out, "mask_negative = {}", self.update.mask_negative);
        let _ = writeln!(
            out,
            "advantage_scheme = {}",
            scheme_str(self.update.advantage_scheme)
        );
        let _ = writeln!(out, "group_size = {}", self.update.group_size);
        let _ = writeln!(out, "std_floor = {}", self.update.std_floor);

        if let Some(pk) = &self.pk {
            let _ = writeln!(out, "\n[pk]");
            let _ = writeln!(out, "k_standard = {}", pk.k_standard);
            let _ = writeln!(out, "a_star = {}", pk.a_star);
            let _ = writeln!(out, "budget = {}", pk.budget);
        }
        for stage in &self.stages {
            let _ = writeln!(out, "\n[stage]");
            let _ = writeln!(out, "k_standard = {}", stage.k_standard);
            let _ = writeln!(out, "budget_grid = {}", join_grid(&stage.budget_grid));
            let _ = writeln!(out, "kappa = {}", stage.kappa);
            match stage.b0 {
                Some(b0) => {
                    let _ = writeln!(out, "b0 = {b0}");
                }
                None => {
                    let _ = writeln!(out, "b0 = auto");
                }
            }
            let _ = writeln!(out, "steps = {}", stage.steps);
        }
        if let Some(sj) = &self.synthetic_j {
            let _ = writeln!(out, "\n[synthetic_j]");
            let _ = writeln!(out, "p = {}", sj.p);
            let _ = writeln!(out, "q = {}", sj.q);
            let _ = writeln!(out, "budget_grid = {}", join_grid(&sj.budget_grid));
            let _ = writeln!(out, "kappa = {}", sj.kappa);
            let _ = writeln!(out, "b0 = {}", sj.b0);
        }
        if let Some(cd) = &self.countdown {
            let _ = writeln!(out, "\n[countdown]");
            let _ = writeln!(out, "difficulty = {}", cd.difficulty);
            let _ = writeln!(out, "problems = {}", cd.problems);
            let _ = writeln!(out, "traces_per_step = {}", cd.traces_per_step);
            let _ = writeln!(out, "value_max = {}", cd.value_max);
            let _ = writeln!(out, "target_max = {}", cd.target_max);
        }
        if let Some(th) = &self.theorem {
            let _ = writeln!(out, "\n[theorem]");
            let _ = writeln!(out, "gradient_rows = {}", th.gradient_rows);
            let _ = writeln!(out, "distributions = {}", th.distributions);
            let _ = writeln!(out, "eta = {}", th.eta);
        }
        out
    }

    /// Parses the key = value format. Unknown sections or keys are errors;
    /// semantic violations are left to `validate`.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut config = RunConfig::default();
        let mut section = String::new();
        for (line_no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                match section.as_str() {
                    "run" | "update" | "pk" | "stage" | "synthetic_j" | "countdown"
                    | "theorem" => {}
                    other => {
                        return Err(Error::Config(format!(
                            "line {}: unknown section [{other}]",
                            line_no + 1
                        )));
                    }
                }
                match section.as_str() {
                    "pk" => {
                        config.pk = Some(PkConfig {
                            k_standard: 0,
                            a_star: 0,
                            budget: 0,
                        })
                    }
                    "stage" => config.stages.push(StageConfig {
                        k_standard: 0,
                        budget_grid: Vec::new(),
                        kappa: 0.0,
                        b0: None,
                        steps: 0,
                    }),
                    "synthetic_j" => {
                        config.synthetic_j = Some(SyntheticJConfig {
                            p: 0.0,
                            q: 0.0,
                            budget_grid: Vec::new(),
                            kappa: 0.0,
                            b0: 1,
                        })
                    }
                    "countdown" => {
                        config.countdown = Some(CountdownConfig {
                            difficulty: 0,
                            problems: 0,
                            traces_per_step: 0,
                            value_max: 0,
                            target_max: 0,
                        })
                    }
                    "theorem" => {
                        config.theorem = Some(TheoremConfig {
                            gradient_rows: 0,
                            distributions: 0,
                            eta: 0.0,
                        })
                    }
                    _ => {}
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value", line_no + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            set_key(&mut config, &section, key, value)
                .map_err(|e| Error::Config(format!("line {}: {e}", line_no + 1)))?;
        }
        Ok(config)
    }

    /// Reports every violation; an empty list means the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.name.is_empty() {
            problems.push("run.name is required".to_string());
        }
        if self.seed.is_none() {
            problems.push("run.seed is required".to_string());
        }
        if self.checkpoint_interval == 0 {
            problems.push("run.checkpoint_interval must be at least 1".to_string());
        }
        if self.eval_rollouts == 0 {
            problems.push("run.eval_rollouts must be at least 1".to_string());
        }
        if let Err(e) = self.update.validate() {
            problems.push(e.to_string());
        }
        match self.environment {
            EnvKind::Pk => {
                if self.pk.is_none() && self.stages.is_empty() {
                    problems.push("pk runs need a [pk] section or [stage] sections".to_string());
                }
                if let Some(pk) = &self.pk {
                    if pk.k_standard < 2 {
                        problems.push("pk.k_standard must be at least 2".to_string());
                    } else if pk.a_star >= pk.k_standard {
                        problems.push(format!(
                            "pk.a_star {} outside 0..{}",
                            pk.a_star, pk.k_standard
                        ));
                    }
                    if pk.budget == 0 && self.stages.is_empty() {
                        problems.push("pk.budget must be at least 1".to_string());
                    }
                }
                for (i, stage) in self.stages.iter().enumerate() {
                    if stage.k_standard < 2 {
                        problems.push(format!("stage {i}: k_standard must be at least 2"));
                    }
                    if let Some(pk) = &self.pk {
                        if pk.a_star >= stage.k_standard {
                            problems.push(format!(
                                "stage {i}: a_star {} outside 0..{}",
                                pk.a_star, stage.k_standard
                            ));
                        }
                    }
                    problems.extend(validate_grid_kappa(
                        &format!("stage {i}"),
                        &stage.budget_grid,
                        stage.kappa,
                    ));
                }
                if self.stages.len() > 1 {
                    for (i, pair) in self.stages.windows(2).enumerate() {
                        if pair[1].k_standard < pair[0].k_standard {
                            problems.push(format!(
                                "stage {}: action space shrinks from {} to {}",
                                i + 1,
                                pair[0].k_standard,
                                pair[1].k_standard
                            ));
                        }
                    }
                }
            }
            EnvKind::SyntheticJ => match &self.synthetic_j {
                None => problems.push("synthetic-j runs need a [synthetic_j] section".to_string()),
                Some(sj) => {
                    if !(sj.p > 0.0 && sj.q > 0.0 && sj.p + sj.q < 1.0) {
                        problems.push(
                            "synthetic_j.p and q must be positive with p + q < 1".to_string(),
                        );
                    }
                    problems.extend(validate_grid_kappa(
                        "synthetic_j",
                        &sj.budget_grid,
                        sj.kappa,
                    ));
                    if sj.b0 < 1 {
                        problems.push("synthetic_j.b0 must be at least 1".to_string());
                    }
                }
            },
            EnvKind::CountdownAnalytics => match &self.countdown {
                None => {
                    problems.push("countdown-analytics runs need a [countdown] section".to_string())
                }
                Some(cd) => {
                    if !(3..=7).contains(&cd.difficulty) {
                        problems.push(format!(
                            "countdown.difficulty {} outside 3..=7",
                            cd.difficulty
                        ));
                    }
                    if cd.problems == 0 || cd.traces_per_step == 0 {
                        problems
                            .push("countdown.problems and traces_per_step must be positive".into());
                    }
                    if cd.value_max < 1 || cd.target_max < 1 {
                        problems.push("countdown value/target bounds must be positive".into());
                    }
                    if self.steps == 0 {
                        problems.push("countdown-analytics runs need steps >= 1".to_string());
                    }
                }
            },
            EnvKind::TheoremSuite => match &self.theorem {
                None => problems.push("theorem-suite runs need a [theorem] section".to_string()),
                Some(th) => {
                    if th.gradient_rows == 0 || th.distributions == 0 {
                        problems
                            .push("theorem.gradient_rows and distributions must be positive".into());
                    }
                    if !(th.eta > 0.0) {
                        problems.push("theorem.eta must be positive".to_string());
                    }
                }
            },
        }
        problems
    }
}

fn validate_grid_kappa(context: &str, grid: &[usize], kappa: f64) -> Vec<String> {
    let mut problems = Vec::new();
    if grid.len() < 2 {
        problems.push(format!("{context}: budget_grid needs at least two entries"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        problems.push(format!("{context}: budget_grid must be strictly ascending"));
    }
    if grid.first().is_some_and(|&b| b == 0) {
        problems.push(format!("{context}: budgets must be positive"));
    }
    if !(kappa > 1.0) {
        problems.push(format!(
            "{context}: kappa must exceed 1 (doubling threshold), got {kappa}"
        ));
    }
    problems
}

fn parse_grid(value: &str) -> std::result::Result<Vec<usize>, String> {
    value
        .split(',')
        .map(|part| {
            part.trim()
                .parse()
                .map_err(|e| format!("bad budget '{part}': {e}"))
        })
        .collect()
}

fn set_key(
    config: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    macro_rules! parse {
        () => {
            value.parse().map_err(|e| format!("bad {key}: {e}"))?
        };
    }
    match (section, key) {
        ("run", "name") => config.name = value.to_string(),
        ("run", "seed") => config.seed = Some(parse!()),
        ("run", "environment") => {
            config.environment = EnvKind::parse(value)
                .ok_or_else(|| format!("unknown environment '{value}'"))?;
        }
        ("run", "out") => config.out_dir = PathBuf::from(value),
        ("run", "workers") => config.workers = parse!(),
        ("run", "steps") => config.steps = parse!(),
        ("run", "checkpoint_interval") => config.checkpoint_interval = parse!(),
        ("run", "eval_rollouts") => config.eval_rollouts = parse!(),
        ("run", "probe_rollouts") => config.probe_rollouts = parse!(),
        ("update", "learning_rate") => config.update.learning_rate = parse!(),
        ("update", "mask_negative") => config.update.mask_negative = parse!(),
        ("update", "advantage_scheme") => {
            config.update.advantage_scheme =
                parse_scheme(value).ok_or_else(|| format!("unknown scheme '{value}'"))?;
        }
        ("update", "group_size") => config.update.group_size = parse!(),
        ("update", "std_floor") => config.update.std_floor = parse!(),
        ("pk", _) => {
            let pk = config.pk.as_mut().ok_or("pk key outside [pk] section")?;
            match key {
                "k_standard" => pk.k_standard = parse!(),
                "a_star" => pk.a_star = parse!(),
                "budget" => pk.budget = parse!(),
                other => return Err(format!("unknown pk key '{other}'")),
            }
        }
        ("stage", _) => {
            let stage = config.stages.last_mut().ok_or("stage key outside [stage]")?;
            match key {
                "k_standard" => stage.k_standard = parse!(),
                "budget_grid" => stage.budget_grid = parse_grid(value)?,
                "kappa" => stage.kappa = parse!(),
                "b0" => {
                    stage.b0 = if value == "auto" {
                        None
                    } else {
                        Some(value.parse().map_err(|e| format!("bad b0: {e}"))?)
                    }
                }
                "steps" => stage.steps = parse!(),
                other => return Err(format!("unknown stage key '{other}'")),
            }
        }
        ("synthetic_j", _) => {
            let sj = config
                .synthetic_j
                .as_mut()
                .ok_or("synthetic_j key outside its section")?;
            match key {
                "p" => sj.p = parse!(),
                "q" => sj.q = parse!(),
                "budget_grid" => sj.budget_grid = parse_grid(value)?,
                "kappa" => sj.kappa = parse!(),
                "b0" => sj.b0 = parse!(),
                other => return Err(format!("unknown synthetic_j key '{other}'")),
            }
        }
        ("countdown", _) => {
            let cd = config
                .countdown
                .as_mut()
                .ok_or("countdown key outside its section")?;
            match key {
                "difficulty" => cd.difficulty = parse!(),
                "problems" => cd.problems = parse!(),
                "traces_per_step" => cd.traces_per_step = parse!(),
                "value_max" => cd.value_max = parse!(),
                "target_max" => cd.target_max = parse!(),
                other => return Err(format!("unknown countdown key '{other}'")),
            }
        }
        ("theorem", _) => {
            let th = config
                .theorem
                .as_mut()
                .ok_or("theorem key outside its section")?;
            match key {
                "gradient_rows" => th.gradient_rows = parse!(),
                "distributions" => th.distributions = parse!(),
                "eta" => th.eta = parse!(),
                other => return Err(format!("unknown theorem key '{other}'")),
            }
        }
        ("", _) => return Err(format!("key '{key}' before any section")),
        (section, key) => return Err(format!("unknown key '{key}' in [{section}]")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::presets;

    #[test]
    fn every_preset_round_trips() {
        for preset in presets::list_presets() {
            let config = presets::preset_config(&preset.name).unwrap();
            let text = config.to_text();
            let reparsed = RunConfig::parse(&text).unwrap();
            assert_eq!(reparsed, config, "preset {}", preset.name);
            assert_eq!(reparsed.to_text(), text);
        }
    }

    #[test]
    fn validate_reports_all_violations() {
        let mut config = presets::preset_config("fig8c-budget-select").unwrap();
        config.seed = None;
        config.synthetic_j.as_mut().unwrap().kappa = 0.9;
        let problems = config.validate();
        assert!(problems.iter().any(|p| p.contains("seed")), "{problems:?}");
        assert!(
            problems.iter().any(|p| p.contains("kappa must exceed 1")),
            "{problems:?}"
        );
        assert!(problems.len() >= 2);
    }

    #[test]
    fn valid_preset_has_no_diagnostics() {
        for preset in presets::list_presets() {
            let config = presets::preset_config(&preset.name).unwrap();
            assert!(config.validate().is_empty(), "preset {}", preset.name);
        }
    }

    #[test]
    fn unknown_keys_and_sections_are_errors() {
        assert!(RunConfig::parse("[bogus]\n").is_err());
        assert!(RunConfig::parse("[run]\nbogus_key = 1\n").is_err());
        assert!(RunConfig::parse("name = x\n").is_err());
        assert!(RunConfig::parse("[run]\nname\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let config = RunConfig::parse("# comment\n\n[run]\nname = t\nseed = 1\n").unwrap();
        assert_eq!(config.name, "t");
        assert_eq!(config.seed, Some(1));
    }
}
