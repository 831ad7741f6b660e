//! Exhaustive search over binary assignments for tiny instances.

use super::EvalError;
use crate::objective::Objective;
use crate::problem::ProblemSpec;
use crate::rounding::BinaryAssignment;
use crate::scalar::Scalar;

/// Largest `(J+1)^I` accepted.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Absolute slack on hard constraints, relative to `max(1, |rhs|)`.
const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum BruteForceResult {
    Optimal { assignment: BinaryAssignment, objective: f64, enumerated: u64 },
    Infeasible { enumerated: u64 },
}

impl BruteForceResult {
    pub fn enumerated(&self) -> u64 {
        match self {
            Self::Optimal { enumerated, .. } | Self::Infeasible { enumerated } => *enumerated,
        }
    }

    pub fn objective(&self) -> Option<f64> {
        match self {
            Self::Optimal { objective, .. } => Some(*objective),
            Self::Infeasible { .. } => None,
        }
    }
}

/// Minimizes `f` over all assignments of each item to one owner or none.
///
/// Depth-first over items; every level keeps its own copy of the running sums,
/// so each leaf's sums are computed along a single path without cancellation.
pub fn brute_force_integer<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
) -> Result<BruteForceResult, EvalError> {
    let (ni, nj) = (spec.num_items, spec.num_owners);
    let count = ((nj + 1) as f64).powi(ni as i32);
    if count > BRUTE_FORCE_LIMIT {
        return Err(EvalError::SizeGuard { what: "(J+1)^I", value: count, limit: BRUTE_FORCE_LIMIT });
    }
    let s_count = spec.num_combined();
    let width = s_count * nj + nj;
    // levels[k] = sums over items 0..k; layout: constraint lhs (S×J) then z (J)
    let mut levels = vec![vec![0.0f64; width]; ni + 1];
    let mut choice = vec![0usize; ni];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut enumerated = 0u64;

    let feasible = |sums: &[f64]| -> bool {
        for m in 0..spec.num_ineq {
            for j in 0..nj {
                let b = spec.b(m, j).as_f64();
                if b.is_finite() && sums[m * nj + j] - b > FEASIBILITY_TOL * b.abs().max(1.0) {
                    return false;
                }
            }
        }
        for n in 0..spec.num_eq {
            for j in 0..nj {
                let c = spec.c(n, j).as_f64();
                if (sums[(spec.num_ineq + n) * nj + j] - c).abs() > FEASIBILITY_TOL * c.abs().max(1.0) {
                    return false;
                }
            }
        }
        true
    };

    // Iterative DFS: choice[k] ∈ 0..=J where J means "none".
    let mut depth = 0usize;
    if ni == 0 {
        return Err(EvalError::Dimension("no items".into()));
    }
    choice[0] = 0;
    loop {
        if choice[depth] > nj {
            if depth == 0 {
                break;
            }
            depth -= 1;
            choice[depth] += 1;
            continue;
        }
        let (prev, rest) = levels.split_at_mut(depth + 1);
        let cur = &mut rest[0];
        cur.copy_from_slice(&prev[depth]);
        let owner = choice[depth];
        if owner < nj {
            let w = spec.w(depth);
            for (s, &ws) in w.iter().enumerate() {
                cur[s * nj + owner] += ws.as_f64();
            }
            cur[s_count * nj + owner] += spec.omega(depth)[owner].as_f64();
        }
        if depth + 1 < ni {
            depth += 1;
            choice[depth] = 0;
            continue;
        }
        enumerated += 1;
        if feasible(cur) {
            let z: Vec<T> = cur[s_count * nj..].iter().map(|&v| T::lit(v)).collect();
            let value = objective.value(&z)?.as_f64();
            if best.as_ref().is_none_or(|(b, _)| value < *b) {
                best = Some((value, choice.clone()));
            }
        }
        choice[depth] += 1;
    }

    Ok(match best {
        Some((objective, owners)) => BruteForceResult::Optimal {
            assignment: BinaryAssignment { owners: owners.into_iter().map(|o| (o < nj).then_some(o as u32)).collect() },
            objective,
            enumerated,
        },
        None => BruteForceResult::Infeasible { enumerated },
    })
}
