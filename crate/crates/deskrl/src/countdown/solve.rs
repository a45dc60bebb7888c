//! Exhaustive Countdown solver: enumerates every way of combining the
//! candidate multiset with exact integer arithmetic and returns a witness
//! expression when one reaches the target. Candidates may be left unused,
//! matching the at-most-once usage rule.

use std::collections::HashSet;

use super::expr::{Expr, Op};
use super::CountdownInstance;
use crate::error::{Error, Result};

/// Exhaustive search becomes impractical past this many candidates.
pub const MAX_SOLVE_CANDIDATES: usize = 7;

/// Finds an expression over the candidates that evaluates exactly to the
/// target, or `None` when no such expression exists. The returned witness
/// always passes [`super::verify`].
pub fn solve(instance: &CountdownInstance) -> Result<Option<Expr>> {
    if instance.candidates.len() > MAX_SOLVE_CANDIDATES {
        return Err(Error::TooManyCandidates(
            instance.candidates.len(),
            MAX_SOLVE_CANDIDATES,
        ));
    }
    let items: Vec<(i64, Expr)> = instance
        .candidates
        .iter()
        .map(|&v| (v, Expr::Num(v)))
        .collect();
    let mut seen = HashSet::new();
    Ok(search(items, instance.target, &mut seen))
}

fn search(items: Vec<(i64, Expr)>, target: i64, seen: &mut HashSet<Vec<i64>>) -> Option<Expr> {
    for (value, expr) in &items {
        if *value == target {
            return Some(expr.clone());
        }
    }
    if items.len() < 2 {
        return None;
    }
    let mut key: Vec<i64> = items.iter().map(|(v, _)| *v).collect();
    key.sort_unstable();
    if !seen.insert(key) {
        return None;
    }

    for i in 0..items.len() {
        for j in (i + 1)..items.len() {
            let (a, ea) = &items[i];
            let (b, eb) = &items[j];
            for (op, flip) in [
                (Op::Add, false),
                (Op::Mul, false),
                (Op::Sub, false),
                (Op::Sub, true),
                (Op::Div, false),
                (Op::Div, true),
            ] {
                let (x, y, ex, ey) = if flip { (*b, *a, eb, ea) } else { (*a, *b, ea, eb) };
                let Some(value) = op.apply(x, y) else {
                    continue;
                };
                let mut rest: Vec<(i64, Expr)> = Vec::with_capacity(items.len() - 1);
                rest.push((value, Expr::bin(op, ex.clone(), ey.clone())));
                for (k, item) in items.iter().enumerate() {
                    if k != i && k != j {
                        rest.push(item.clone());
                    }
                }
                if let Some(found) = search(rest, target, seen) {
                    return Some(found);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::super::{verify, UsageRule};
    use super::*;

    #[test]
    fn finds_simple_product() {
        let inst = CountdownInstance::new(vec![3, 4], 12).unwrap();
        let witness = solve(&inst).unwrap().unwrap();
        assert_eq!(witness.eval(), Some(12));
        assert!(verify(&inst, &witness.to_string()).unwrap());
    }

    /// {1, 1} can only reach 0, 1, and 2; of the valid (positive) targets
    /// that means 1 and 2 are solvable and 3 is not.
    #[test]
    fn reports_unreachable_target() {
        let inst = CountdownInstance::new(vec![1, 1], 3).unwrap();
        assert!(solve(&inst).unwrap().is_none());
        for target in [1, 2] {
            let inst = CountdownInstance::new(vec![1, 1], target).unwrap();
            assert!(solve(&inst).unwrap().is_some(), "target {target}");
        }
    }

    #[test]
    fn solves_reference_instance() {
        let inst = CountdownInstance::new(vec![37, 14, 56, 65, 61], 466).unwrap();
        let witness = solve(&inst).unwrap().unwrap();
        assert_eq!(witness.eval(), Some(466));
        assert!(verify(&inst, &witness.to_string()).unwrap());
    }

    #[test]
    fn partial_usage_is_allowed() {
        // 7 alone already matches even though 3 is unused.
        let inst = CountdownInstance::new(vec![7, 3], 7).unwrap();
        let witness = solve(&inst).unwrap().unwrap();
        assert_eq!(witness.eval(), Some(7));
        assert!(verify(&inst, &witness.to_string()).unwrap());
        assert_eq!(
            super::super::verify_with(&inst, &witness.to_string(), UsageRule::ExactlyOnce)
                .unwrap(),
            false
        );
    }

    #[test]
    fn too_many_candidates_is_an_error() {
        let inst = CountdownInstance::new(vec![1, 2, 3, 4, 5, 6, 7, 8], 100).unwrap();
        assert!(matches!(
            solve(&inst),
            Err(Error::TooManyCandidates(8, MAX_SOLVE_CANDIDATES))
        ));
    }
}
