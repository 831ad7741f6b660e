//! Correctness metrics and reference solvers.
//!
//! APD of a value against a reference is `|(sol − ref)/ref|`. Inequalities only
//! count violations, `|max(xᵀu − b, 0)/b|`; equalities count both directions,
//! `|(xᵀv − c)/c|`. MAPD is the arithmetic mean over active entries.

mod brute;
mod kkt;
mod oracle;

pub use brute::{brute_force_integer, BruteForceResult, BRUTE_FORCE_LIMIT};
pub use kkt::{check_kkt, KktMultipliers, KktReport};
pub use oracle::{oracle_solve, oracle_solve_with, OracleOptions, OracleSolution, ORACLE_MAX_ITEMS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{eq_lhs, ineq_lhs};
use crate::objective::{Objective, ObjectiveError};
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("zero-reference: objective APD is undefined against a zero reference")]
    ZeroReference,
    #[error("zero-denominator: {family} constraint ({constraint}, owner {owner}) has a zero right-hand side")]
    ZeroDenominator { family: &'static str, constraint: usize, owner: usize },
    #[error("size-guard: {what} is {value}, limit {limit}")]
    SizeGuard { what: &'static str, value: f64, limit: f64 },
    #[error("no-convergence: oracle stopped after {iterations} iterations with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("singular system in the oracle: {0}")]
    Singular(String),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

pub fn objective_apd(sol: f64, reference: f64) -> Result<f64, EvalError> {
    if reference == 0.0 {
        return Err(EvalError::ZeroReference);
    }
    Ok(((sol - reference) / reference).abs())
}

/// `|max(xᵀu − b, 0)/b|` for one owner column `x` and one feature column `u`.
pub fn ineq_apd(x: &[f64], u: &[f64], b: f64) -> Result<f64, EvalError> {
    if b == 0.0 {
        return Err(EvalError::ZeroDenominator { family: "inequality", constraint: 0, owner: 0 });
    }
    let lhs: f64 = x.iter().zip(u).map(|(a, b)| a * b).sum();
    Ok(((lhs - b).max(0.0) / b).abs())
}

/// `|(xᵀv − c)/c|` for one owner column `x` and one feature column `v`.
pub fn eq_apd(x: &[f64], v: &[f64], c: f64) -> Result<f64, EvalError> {
    if c == 0.0 {
        return Err(EvalError::ZeroDenominator { family: "equality", constraint: 0, owner: 0 });
    }
    let lhs: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
    Ok(((lhs - c) / c).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConstraintMapd {
    pub ineq: f64,
    pub eq: f64,
}

/// MAPDs from precomputed `Xᵀu` (M×J) and `Xᵀv` (N×J).
///
/// Inactive inequalities and zero right-hand sides are left out of the means; a
/// family with no counted entries reports 0.
pub fn constraint_mapds<T: Scalar>(spec: &ProblemSpec<T>, xu: &[T], xv: &[T]) -> ConstraintMapd {
    let mean = |terms: &mut dyn Iterator<Item = f64>| {
        let (sum, count) = terms.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
        if count == 0 { 0.0 } else { sum / count as f64 }
    };
    let ineq = mean(&mut spec.ineq_bounds.iter().zip(xu).filter_map(|(&b, &l)| {
        let b = b.as_f64();
        (b.is_finite() && b != 0.0).then(|| ((l.as_f64() - b).max(0.0) / b).abs())
    }));
    let eq = mean(&mut spec.eq_targets.iter().zip(xv).filter_map(|(&c, &l)| {
        let c = c.as_f64();
        (c != 0.0).then(|| ((l.as_f64() - c) / c).abs())
    }));
    ConstraintMapd { ineq, eq }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionReport {
    pub objective: f64,
    pub reference: Option<f64>,
    pub objective_apd: Option<f64>,
    pub ineq_mapd: f64,
    pub eq_mapd: f64,
    /// M×J row-major; `None` for inactive entries.
    pub ineq_apd: Vec<Option<f64>>,
    /// N×J row-major.
    pub eq_apd: Vec<f64>,
}

/// Full report for a solution `x` (I×J), optionally against a reference objective.
pub fn evaluate<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
    x: &[T],
    reference: Option<f64>,
) -> Result<SolutionReport, EvalError> {
    let j = spec.num_owners;
    if x.len() != spec.num_items * j {
        return Err(EvalError::Dimension(format!("solution has {} entries, expected {}", x.len(), spec.num_items * j)));
    }
    let value = objective.f_eval(spec, x)?.as_f64();
    let xu = ineq_lhs(spec, x);
    let xv = eq_lhs(spec, x);
    let mut ineq_apd = Vec::with_capacity(xu.len());
    for (k, (&b, &l)) in spec.ineq_bounds.iter().zip(&xu).enumerate() {
        let b = b.as_f64();
        if !b.is_finite() {
            ineq_apd.push(None);
        } else if b == 0.0 {
            return Err(EvalError::ZeroDenominator { family: "inequality", constraint: k / j, owner: k % j });
        } else {
            ineq_apd.push(Some(((l.as_f64() - b).max(0.0) / b).abs()));
        }
    }
    let mut eq_apd = Vec::with_capacity(xv.len());
    for (k, (&c, &l)) in spec.eq_targets.iter().zip(&xv).enumerate() {
        let c = c.as_f64();
        if c == 0.0 {
            return Err(EvalError::ZeroDenominator { family: "equality", constraint: k / j, owner: k % j });
        }
        eq_apd.push(((l.as_f64() - c) / c).abs());
    }
    let mapd = constraint_mapds(spec, &xu, &xv);
    let objective_apd = reference.map(|r| objective_apd(value, r)).transpose()?;
    Ok(SolutionReport { objective: value, reference, objective_apd, ineq_mapd: mapd.ineq, eq_mapd: mapd.eq, ineq_apd, eq_apd })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::ObjectiveKind;
    use crate::problem::test_support::small_spec;

    #[test]
    fn apd_examples() {
        assert_eq!(objective_apd(2.5, 2.5).unwrap(), 0.0);
        assert!((objective_apd(1.05, 1.0).unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(objective_apd(1.0, 0.0), Err(EvalError::ZeroReference));
    }

    #[test]
    fn constraint_apd_examples() {
        // satisfied: 0.5·(−1) + 0.5·(−1) = −1 ≤ −0.5
        assert_eq!(ineq_apd(&[0.5, 0.5], &[-1.0, -1.0], -0.5).unwrap(), 0.0);
        // lhs = −0.99 against b = −1: violated by 1% of |b|
        let v = ineq_apd(&[0.99], &[-1.0], -1.0 * 1.0).unwrap();
        assert!((v - 0.01).abs() < 1e-12, "{v}");
        // lhs = 1.01·b with b < 0 is satisfied (more negative)
        assert_eq!(ineq_apd(&[1.01], &[-1.0], -1.0).unwrap(), 0.0);
        assert_eq!(eq_apd(&[0.25, 0.75], &[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert!(matches!(eq_apd(&[1.0], &[1.0], 0.0), Err(EvalError::ZeroDenominator { .. })));
    }

    #[test]
    fn report_matches_hand_loops() {
        let mut spec = small_spec(ObjectiveKind::Quadratic, 6, 3, 2);
        spec.ineq_bounds[1] = f64::INFINITY;
        let x: Vec<f64> = (0..18).map(|k| ((k * 7) % 5) as f64 / 12.0).collect();
        let report = evaluate(&spec, &spec.objective, &x, Some(1.0)).unwrap();
        let mut ineq = vec![];
        let mut eq = vec![];
        for jj in 0..3 {
            let col: Vec<f64> = (0..6).map(|i| x[i * 3 + jj]).collect();
            let u: Vec<f64> = (0..6).map(|i| spec.u(i)[0]).collect();
            let v: Vec<f64> = (0..6).map(|i| spec.v(i)[0]).collect();
            if jj != 1 {
                ineq.push(ineq_apd(&col, &u, spec.b(0, jj)).unwrap());
            }
            eq.push(eq_apd(&col, &v, spec.c(0, jj)).unwrap());
        }
        assert!((report.ineq_mapd - ineq.iter().sum::<f64>() / 2.0).abs() < 1e-12);
        assert!((report.eq_mapd - eq.iter().sum::<f64>() / 3.0).abs() < 1e-12);
        assert_eq!(report.ineq_apd[1], None);
        assert!(report.eq_apd.iter().all(|&a| a >= 0.0));
    }

    #[test]
    fn feasible_point_has_zero_ineq_mapd() {
        let spec = small_spec(ObjectiveKind::Quadratic, 4, 2, 1);
        let x = vec![0.5; 8];
        let xu = ineq_lhs(&spec, &x);
        let mut relaxed = spec.clone();
        for (b, l) in relaxed.ineq_bounds.iter_mut().zip(&xu) {
            *b = l * 0.5; // l < 0, so l ≤ l/2
        }
        let report = evaluate(&relaxed, &relaxed.objective, &x, None).unwrap();
        assert_eq!(report.ineq_mapd, 0.0);
    }
}
