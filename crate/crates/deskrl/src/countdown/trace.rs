//! Trace analytics: splits free-form solution text into attempts on blank
//! lines, extracts `operand op operand = value` steps, re-verifies them with
//! exact arithmetic, and counts generation-then-verification chains and
//! unique attempts across training steps.

use std::collections::{HashMap, HashSet};

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use super::expr::Op;
use super::CountdownInstance;

/// One parsed equation line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Step {
    pub op: Op,
    pub lhs: i64,
    pub rhs: i64,
    pub result: i64,
}

impl Step {
    /// Whether the recorded result equals exact integer evaluation
    /// (division must be exact).
    pub fn exact(&self) -> bool {
        self.op.apply(self.lhs, self.rhs) == Some(self.result)
    }

    /// Commutative operands sorted, so `3 + 4` and `4 + 3` share a key.
    pub fn canonical(&self) -> Step {
        if self.op.commutative() && self.rhs < self.lhs {
            Step {
                op: self.op,
                lhs: self.rhs,
                rhs: self.lhs,
                result: self.result,
            }
        } else {
            *self
        }
    }

    pub fn to_line(&self) -> String {
        format!("{} {} {} = {}", self.lhs, self.op, self.rhs, self.result)
    }
}

/// One blank-line-delimited segment that contained at least one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub steps: Vec<Step>,
    /// The last step's recorded result.
    pub final_value: i64,
    /// Source segment text.
    pub raw_text: String,
    /// Every recorded result matches exact evaluation.
    pub steps_exact: bool,
    /// Operands draw only on unconsumed candidates and prior results, each
    /// used at most once.
    pub usage_valid: bool,
    /// The steps are followed, within the segment, by a comparison of the
    /// outcome (trailing commentary after the final step's value).
    pub chained: bool,
}

impl Attempt {
    /// Valid attempts have exact arithmetic and legal candidate usage.
    pub fn is_valid(&self) -> bool {
        self.steps_exact && self.usage_valid
    }

    /// Canonical multiset key for uniqueness counting: sorted canonical steps.
    pub fn canonical_key(&self) -> Vec<Step> {
        let mut steps: Vec<Step> = self.steps.iter().map(Step::canonical).collect();
        steps.sort_unstable();
        steps
    }

    /// Step lines only, whitespace-normalized; parsing this text again
    /// reproduces the same steps.
    pub fn to_text(&self, target: i64) -> String {
        let mut lines: Vec<String> = self.steps.iter().map(Step::to_line).collect();
        if self.chained {
            if let Some(last) = lines.last_mut() {
                let verdict = if self.final_value == target {
                    "(This works!)"
                } else {
                    "(not quite there)"
                };
                last.push(' ');
                last.push_str(verdict);
            }
        }
        lines.join("\n")
    }
}

/// Full analysis of one trace against one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    pub attempts: Vec<Attempt>,
    /// Attempts whose steps are followed by an outcome comparison in the
    /// same segment: generation composed with verification.
    pub chained_asymmetry_count: usize,
    pub solved: bool,
    pub solving_attempt_index: Option<usize>,
    /// The text had content but yielded no attempts.
    pub unmatched: bool,
}

impl TraceAnalysis {
    /// Re-serialization of the attempts (blank-line separated); reparsing
    /// yields an analysis with identical attempts, chain counts, and
    /// solved status.
    pub fn to_text(&self, target: i64) -> String {
        self.attempts
            .iter()
            .map(|a| a.to_text(target))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn step_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)^\s*
              (?: \d+ [.)] \s+ )?              # optional list numbering
              (\d[\d,]*) \s* ([+\-*/×÷]) \s* (\d[\d,]*)
              \s* = \s* (-?\d[\d,]*)
              \s* (.*) $",
        )
        .expect("step regex compiles")
    })
}

fn parse_number(text: &str) -> Option<i64> {
    let cleaned: String = text.chars().filter(|c| *c != ',').collect();
    cleaned.parse().ok()
}

fn parse_op(text: &str) -> Option<Op> {
    match text {
        "+" => Some(Op::Add),
        "-" => Some(Op::Sub),
        "*" | "×" => Some(Op::Mul),
        "/" | "÷" => Some(Op::Div),
        _ => None,
    }
}

/// Splits `text` into blank-line-delimited segments, extracts step lines
/// from each, and re-verifies every attempt against the instance.
pub fn parse_trace(text: &str, instance: &CountdownInstance) -> TraceAnalysis {
    let mut attempts = Vec::new();
    for segment in segments(text) {
        if let Some(attempt) = parse_segment(&segment, instance) {
            attempts.push(attempt);
        }
    }

    let chained_asymmetry_count = attempts.iter().filter(|a| a.chained).count();
    let solving_attempt_index = attempts
        .iter()
        .position(|a| a.is_valid() && a.final_value == instance.target);

    TraceAnalysis {
        unmatched: attempts.is_empty() && !text.trim().is_empty(),
        solved: solving_attempt_index.is_some(),
        solving_attempt_index,
        chained_asymmetry_count,
        attempts,
    }
}

fn segments(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

fn parse_segment(segment: &str, instance: &CountdownInstance) -> Option<Attempt> {
    let re = step_regex();
    let mut steps = Vec::new();
    let mut last_step_line = 0usize;
    let mut last_trailer_nonempty = false;
    let lines: Vec<&str> = segment.lines().collect();

    for (idx, line) in lines.iter().enumerate() {
        let Some(caps) = re.captures(line) else {
            continue;
        };
        let (Some(lhs), Some(op), Some(rhs), Some(result)) = (
            parse_number(&caps[1]),
            parse_op(&caps[2]),
            parse_number(&caps[3]),
            parse_number(&caps[4]),
        ) else {
            continue;
        };
        steps.push(Step {
            op,
            lhs,
            rhs,
            result,
        });
        last_step_line = idx;
        last_trailer_nonempty = !caps[5].trim().is_empty();
    }

    if steps.is_empty() {
        return None;
    }

    let steps_exact = steps.iter().all(Step::exact);
    let usage_valid = check_usage(&steps, instance);
    let final_value = steps.last().unwrap().result;
    // Generation followed by verification: commentary after the final
    // step's value, on the same line or on later lines of the segment.
    let chained = last_trailer_nonempty
        || lines[last_step_line + 1..]
            .iter()
            .any(|l| !l.trim().is_empty());

    Some(Attempt {
        steps,
        final_value,
        raw_text: segment.to_string(),
        steps_exact,
        usage_valid,
        chained,
    })
}

/// Pool-based usage check: the pool starts as the candidate multiset; each
/// step consumes both operands from the pool (candidates or prior results)
/// and adds its result back.
fn check_usage(steps: &[Step], instance: &CountdownInstance) -> bool {
    let mut pool: HashMap<i64, usize> = HashMap::new();
    for &c in &instance.candidates {
        *pool.entry(c).or_insert(0) += 1;
    }
    for step in steps {
        for operand in [step.lhs, step.rhs] {
            match pool.get_mut(&operand) {
                Some(count) if *count > 0 => *count -= 1,
                _ => return false,
            }
        }
        *pool.entry(step.result).or_insert(0) += 1;
    }
    true
}

/// One training step's traces, grouped by problem identifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBatch {
    pub traces: Vec<(String, TraceAnalysis)>,
}

/// Cumulative unique-attempt counts per training step.
///
/// Per the filtering rule, only incorrect traces on problems whose success
/// rate across the whole series is below `success_filter_threshold`
/// contribute. An attempt is unique when its canonical step multiset has
/// not appeared in any earlier (or same-step) trace of the same problem.
pub fn unique_attempts(batches: &[TraceBatch], success_filter_threshold: f64) -> Vec<usize> {
    let mut solved_counts: HashMap<&str, (usize, usize)> = HashMap::new();
    for batch in batches {
        for (problem, analysis) in &batch.traces {
            let entry = solved_counts.entry(problem).or_insert((0, 0));
            entry.1 += 1;
            if analysis.solved {
                entry.0 += 1;
            }
        }
    }
    let keep: HashSet<&str> = solved_counts
        .iter()
        .filter(|(_, (solved, total))| (*solved as f64) < success_filter_threshold * *total as f64)
        .map(|(problem, _)| *problem)
        .collect();

    let mut seen: HashMap<&str, HashSet<Vec<Step>>> = HashMap::new();
    let mut cumulative = 0usize;
    let mut series = Vec::with_capacity(batches.len());
    for batch in batches {
        for (problem, analysis) in &batch.traces {
            if !keep.contains(problem.as_str()) || analysis.solved {
                continue;
            }
            let per_problem = seen.entry(problem).or_default();
            for attempt in &analysis.attempts {
                if per_problem.insert(attempt.canonical_key()) {
                    cumulative += 1;
                }
            }
        }
        series.push(cumulative);
    }
    series
}
