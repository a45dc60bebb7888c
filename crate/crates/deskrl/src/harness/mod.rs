//! Experiment harness: resolves configs or presets, executes runs on a
//! sized worker pool, and writes CSV artifacts plus a digest-bearing
//! manifest. Same config and seed always produce byte-identical CSVs,
//! independent of worker count.

pub mod config;
pub mod presets;
pub mod suite;

pub use config::{
    CountdownConfig, EnvKind, PkConfig, RunConfig, StageConfig, SyntheticJConfig, TheoremConfig,
};
pub use presets::{list_presets, preset_config, Preset};

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bigram::{ActionSpace, BigramPolicy};
use crate::countdown::{self, CountdownInstance, TraceBatch};
use crate::curriculum::{
    baseline_fixed, run_curriculum, select_budget, BudgetSelection, CurriculumStage,
    GeometricCurve, PkEnvironment, RunOptions, SyntheticGeometricEnv,
};
use crate::error::{Error, Result};
use crate::metrics::{RunSeries, RunSeriesRow};
use crate::seeding::derive_seed;

/// One emitted file with its content digest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Everything needed to audit or re-run an experiment bit-identically:
/// the resolved config (both canonical text and structured form), chosen
/// budgets, and digests of every emitted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub library_version: String,
    pub seed: u64,
    pub config_text: String,
    pub config: RunConfig,
    pub wall_clock_secs: f64,
    /// (stage index, chosen budget) for runs with budget selection.
    pub chosen_budgets: Vec<(usize, usize)>,
    pub artifacts: Vec<ArtifactRecord>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        let _ = write!(out, "{byte:02x}");
    }
    out
}

/// In-memory run output before it hits the filesystem.
struct RunOutput {
    artifacts: Vec<(String, Vec<u8>)>,
    chosen_budgets: Vec<(usize, usize)>,
}

/// Executes a validated config and writes its artifacts under
/// `config.out_dir`. Returns the manifest (also written as
/// `manifest.json`).
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    let started = Instant::now();

    let threads = if config.workers == 0 {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    } else {
        config.workers
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let output = pool.install(|| dispatch(config))?;

    fs::create_dir_all(&config.out_dir)?;
    let mut artifacts = Vec::with_capacity(output.artifacts.len());
    for (name, bytes) in &output.artifacts {
        let path = config.out_dir.join(name);
        fs::write(&path, bytes)?;
        artifacts.push(ArtifactRecord {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        });
    }

    let manifest = RunManifest {
        name: config.name.clone(),
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: config.seed.expect("validated"),
        config_text: config.to_text(),
        config: config.clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        chosen_budgets: output.chosen_budgets,
        artifacts,
    };
    fs::write(
        config.out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Verifies the digests in a manifest against files on disk.
pub fn verify_manifest(manifest: &RunManifest, run_dir: &Path) -> Result<bool> {
    for artifact in &manifest.artifacts {
        let bytes = fs::read(run_dir.join(&artifact.path))?;
        if sha256_hex(&bytes) != artifact.sha256 {
            return Ok(false);
        }
    }
    Ok(true)
}

fn dispatch(config: &RunConfig) -> Result<RunOutput> {
    match config.environment {
        EnvKind::Pk => run_pk(config),
        EnvKind::SyntheticJ => run_synthetic(config),
        EnvKind::CountdownAnalytics => run_countdown_analytics(config),
        EnvKind::TheoremSuite => run_theorem_suite(config),
    }
}

fn run_options(config: &RunConfig) -> RunOptions {
    RunOptions {
        seed: config.seed.expect("validated"),
        probe_rollouts: config.probe_rollouts,
        eval_rollouts: config.eval_rollouts,
        checkpoint_interval: config.checkpoint_interval,
    }
}

fn run_pk(config: &RunConfig) -> Result<RunOutput> {
    let env = PkEnvironment;
    let opts = run_options(config);
    let seed = opts.seed;
    let a_star = config.pk.as_ref().map(|pk| pk.a_star).unwrap_or(0);

    if config.stages.is_empty() {
        let pk = config.pk.as_ref().expect("validated");
        let space = ActionSpace::new(pk.k_standard, pk.a_star)?;
        let policy = BigramPolicy::init(derive_seed(seed, 0xACE), space)?;
        let (_trained, series) = baseline_fixed(
            &env,
            &policy,
            &space,
            pk.budget,
            config.steps,
            &config.update,
            &opts,
        )?;
        return Ok(RunOutput {
            artifacts: vec![("series.csv".to_string(), series.to_csv().into_bytes())],
            chosen_budgets: Vec::new(),
        });
    }

    let stages: Vec<CurriculumStage<ActionSpace>> = config
        .stages
        .iter()
        .map(|stage| {
            Ok(CurriculumStage {
                dataset: ActionSpace::new(stage.k_standard, a_star)?,
                budget_grid: stage.budget_grid.clone(),
                kappa: stage.kappa,
                b0: stage.b0,
                steps: stage.steps,
            })
        })
        .collect::<Result<_>>()?;
    let first_space = stages[0].dataset;
    let policy = BigramPolicy::init(derive_seed(seed, 0xACE), first_space)?;
    let outcome = run_curriculum(&env, &policy, &stages, &config.update, &opts)?;

    let mut artifacts = Vec::new();
    let mut probe_csv = ProbeCsv::new();
    let mut chosen = Vec::new();
    for stage_run in &outcome.stages {
        artifacts.push((
            format!("series-stage{}.csv", stage_run.stage_index),
            stage_run.series.to_csv().into_bytes(),
        ));
        probe_csv.push_stage(stage_run.stage_index, &stage_run.selection);
        chosen.push((stage_run.stage_index, stage_run.selection.chosen));
    }
    artifacts.push(("probes.csv".to_string(), probe_csv.finish().into_bytes()));
    Ok(RunOutput {
        artifacts,
        chosen_budgets: chosen,
    })
}

fn run_synthetic(config: &RunConfig) -> Result<RunOutput> {
    let sj = config.synthetic_j.as_ref().expect("validated");
    let stage = CurriculumStage {
        dataset: GeometricCurve { p: sj.p, q: sj.q },
        budget_grid: sj.budget_grid.clone(),
        kappa: sj.kappa,
        b0: Some(sj.b0),
        steps: 0,
    };
    let selection = select_budget(
        &SyntheticGeometricEnv,
        &(),
        &stage,
        config.probe_rollouts,
        config.seed.expect("validated"),
    )?;
    let mut probe_csv = ProbeCsv::new();
    probe_csv.push_stage(0, &selection);
    Ok(RunOutput {
        artifacts: vec![("probes.csv".to_string(), probe_csv.finish().into_bytes())],
        chosen_budgets: vec![(0, selection.chosen)],
    })
}

/// Probe-table CSV: one row per probed budget per stage.
struct ProbeCsv {
    body: String,
}

/// Fixed probe-table header.
pub const PROBES_HEADER: &str = "stage,budget,J,SE,chosen";

impl ProbeCsv {
    fn new() -> Self {
        let mut body = String::from(PROBES_HEADER);
        body.push('\n');
        Self { body }
    }

    fn push_stage(&mut self, stage_index: usize, selection: &BudgetSelection) {
        for probe in &selection.probes {
            let _ = writeln!(
                self.body,
                "{},{},{},{},{}",
                stage_index, probe.budget, probe.j, probe.se, probe.chosen
            );
        }
    }

    fn finish(self) -> String {
        self.body
    }
}

fn run_theorem_suite(config: &RunConfig) -> Result<RunOutput> {
    let th = config.theorem.as_ref().expect("validated");
    let report = suite::run_suite(
        th.gradient_rows,
        th.distributions,
        th.eta,
        config.seed.expect("validated"),
    )?;
    Ok(RunOutput {
        artifacts: vec![(
            "theorem_report.json".to_string(),
            serde_json::to_vec_pretty(&report)?,
        )],
        chosen_budgets: Vec::new(),
    })
}

/// Deterministic synthetic trace corpus for the analytics pipeline: random
/// equation-chain attempts over oracle-certified instances, with a solving
/// trace mixed in at a rate that grows over the step axis.
fn run_countdown_analytics(config: &RunConfig) -> Result<RunOutput> {
    let cd = config.countdown.as_ref().expect("validated");
    let seed = config.seed.expect("validated");

    let mut instances = Vec::with_capacity(cd.problems);
    let mut witnesses = Vec::with_capacity(cd.problems);
    for p in 0..cd.problems {
        let mut rng = crate::seeding::stream_rng(derive_seed(seed, 0xC0), p as u64);
        let instance = countdown::generate(
            cd.difficulty,
            1..=cd.value_max,
            1..=cd.target_max,
            &mut rng,
        )?;
        let witness = countdown::solve(&instance)?.expect("generator certifies solvability");
        witnesses.push(witness);
        instances.push(instance);
    }

    let mut batches = Vec::with_capacity(config.steps);
    let mut batch_stats = Vec::with_capacity(config.steps);
    for step in 0..config.steps {
        let mut traces = Vec::new();
        let mut solved = 0usize;
        let mut attempts = 0usize;
        let mut chained = 0usize;
        for (p, instance) in instances.iter().enumerate() {
            for t in 0..cd.traces_per_step {
                let mut rng = crate::seeding::stream_rng(
                    derive_seed(seed, 0xD0 + step as u64),
                    (p * cd.traces_per_step + t) as u64,
                );
                // Solve rate ramps up over steps, mimicking training progress.
                let solve_bias = 0.1 + 0.8 * step as f64 / config.steps.max(1) as f64;
                let text =
                    synth_trace(instance, &witnesses[p], solve_bias, &mut rng);
                let analysis = countdown::parse_trace(&text, instance);
                solved += analysis.solved as usize;
                attempts += analysis.attempts.len();
                chained += analysis.chained_asymmetry_count;
                traces.push((format!("p{p}"), analysis));
            }
        }
        let total = instances.len() * cd.traces_per_step;
        batch_stats.push((
            solved as f64 / total as f64,
            attempts as f64 / total as f64,
            chained as f64 / total as f64,
        ));
        batches.push(TraceBatch { traces });
    }

    let unique = countdown::unique_attempts(&batches, 0.5);
    let mut series = RunSeries::default();
    for (step, ((reward, length, chained), unique_count)) in
        batch_stats.iter().zip(&unique).enumerate()
    {
        series.push(RunSeriesRow {
            step,
            reward: *reward,
            length: *length,
            p_stop: None,
            entropy: None,
            kl: None,
            unique_attempts: Some(*unique_count),
            chained_mean: Some(*chained),
        });
    }

    let mut instance_lines = String::new();
    for instance in &instances {
        let _ = writeln!(instance_lines, "{}", instance.to_line());
    }
    Ok(RunOutput {
        artifacts: vec![
            ("series.csv".to_string(), series.to_csv().into_bytes()),
            ("instances.txt".to_string(), instance_lines.into_bytes()),
        ],
        chosen_budgets: Vec::new(),
    })
}

/// One synthetic trace: a few random fold attempts, each annotated with a
/// target comparison; with probability `solve_bias` the final attempt is
/// the oracle witness linearized into steps.
fn synth_trace<R: Rng>(
    instance: &CountdownInstance,
    witness: &countdown::Expr,
    solve_bias: f64,
    rng: &mut R,
) -> String {
    let n_attempts = 1 + rng.random_range(0..3);
    let mut segments = Vec::new();
    for _ in 0..n_attempts {
        if let Some(text) = random_attempt(instance, rng) {
            segments.push(text);
        }
    }
    if rng.random::<f64>() < solve_bias {
        segments.push(witness_steps(witness, instance.target));
    }
    segments.join("\n\n")
}

/// Folds a shuffled subset of candidates with random valid ops.
fn random_attempt<R: Rng>(instance: &CountdownInstance, rng: &mut R) -> Option<String> {
    use crate::countdown::Op;
    let mut pool = instance.candidates.clone();
    // Partial Fisher-Yates shuffle.
    for i in 0..pool.len() {
        let j = rng.random_range(i..pool.len());
        pool.swap(i, j);
    }
    let take = 2 + rng.random_range(0..(pool.len() - 1));
    let mut acc = pool[0];
    let mut lines = Vec::new();
    for &operand in pool.iter().take(take).skip(1) {
        let ops = [Op::Add, Op::Sub, Op::Mul, Op::Div];
        let start = rng.random_range(0..4);
        let mut applied = None;
        for offset in 0..4 {
            let op = ops[(start + offset) % 4];
            if let Some(result) = op.apply(acc, operand) {
                applied = Some((op, result));
                break;
            }
        }
        let (op, result) = applied?;
        lines.push(format!("{acc} {} {operand} = {result}", op.symbol()));
        acc = result;
    }
    let verdict = if acc == instance.target {
        " (This works!)"
    } else {
        " (not quite there)"
    };
    let last = lines.last_mut()?;
    last.push_str(verdict);
    Some(lines.join("\n"))
}

/// Linearizes an expression tree into `lhs op rhs = value` lines by
/// post-order evaluation.
fn witness_steps(witness: &countdown::Expr, target: i64) -> String {
    fn walk(expr: &countdown::Expr, lines: &mut Vec<String>) -> i64 {
        match expr {
            countdown::Expr::Num(n) => *n,
            countdown::Expr::Bin(op, lhs, rhs) => {
                let l = walk(lhs, lines);
                let r = walk(rhs, lines);
                let value = op.apply(l, r).expect("witness evaluates exactly");
                lines.push(format!("{l} {} {r} = {value}", op.symbol()));
                value
            }
        }
    }
    let mut lines = Vec::new();
    let value = walk(witness, &mut lines);
    if lines.is_empty() {
        // Single-candidate witness: state it as an identity step.
        lines.push(format!("{value} + 0 = {value}"));
    }
    let verdict = if value == target {
        " (This works!)"
    } else {
        " (not quite there)"
    };
    let last = lines.last_mut().expect("at least one line");
    last.push_str(verdict);
    lines.join("\n")
}

/// Reads a config file, or resolves a preset name when `path` matches one.
pub fn load_config(source: &str) -> Result<RunConfig> {
    if let Some(config) = preset_config(source) {
        return Ok(config);
    }
    let path = PathBuf::from(source);
    if path.exists() {
        let text = fs::read_to_string(&path)?;
        return RunConfig::parse(&text);
    }
    Err(Error::Config(format!(
        "'{source}' is neither a preset nor a config file"
    )))
}
