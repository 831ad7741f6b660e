//! Independent first-order optimality check for the continuous relaxation.
//!
//! Written with plain loops over the problem accessors and no shared code with
//! the oracle beyond `Objective::f_grad`, so each guards the other.

use serde::{Deserialize, Serialize};

use crate::objective::Objective;
use crate::problem::ProblemSpec;

/// Multipliers of the relaxation, all f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktMultipliers {
    /// For `x_ij ≥ 0`, I×J.
    pub bound: Vec<f64>,
    /// For `Σ_j x_ij ≤ 1`, length I.
    pub simplex: Vec<f64>,
    /// For `x_jᵀu_m ≤ b_mj`, M×J; zero for inactive entries.
    pub ineq: Vec<f64>,
    /// For `x_jᵀv_n = c_nj`, N×J, free sign.
    pub eq: Vec<f64>,
}

/// Scaled residuals; each is dimensionless and 0 at an exact KKT point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub primal: f64,
    pub dual_sign: f64,
    pub stationarity: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual_sign).max(self.stationarity).max(self.complementarity)
    }
}

/// Evaluates the KKT conditions at `(x, multipliers)`.
///
/// Constraint residuals are divided by `1 + |rhs|`; gradient-sized quantities by
/// `1 + ‖∇f‖∞`.
pub fn check_kkt<O: Objective<f64> + ?Sized>(
    spec: &ProblemSpec<f64>,
    objective: &O,
    x: &[f64],
    mult: &KktMultipliers,
) -> Result<KktReport, crate::objective::ObjectiveError> {
    let (ni, nj, nm, nn) = (spec.num_items, spec.num_owners, spec.num_ineq, spec.num_eq);
    let grad = objective.f_grad(spec, x)?;
    let gscale = 1.0 + grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));

    let mut primal = 0.0f64;
    let mut dual_sign = 0.0f64;
    let mut comp = 0.0f64;

    for i in 0..ni {
        let mut row = 0.0;
        for j in 0..nj {
            let v = x[i * nj + j];
            row += v;
            primal = primal.max(-v);
            dual_sign = dual_sign.max(-mult.bound[i * nj + j] / gscale);
            comp = comp.max((v * mult.bound[i * nj + j]).abs() / gscale);
        }
        primal = primal.max(row - 1.0);
        dual_sign = dual_sign.max(-mult.simplex[i] / gscale);
        comp = comp.max(((1.0 - row) * mult.simplex[i]).abs() / gscale);
    }
    for m in 0..nm {
        for j in 0..nj {
            let b = spec.b(m, j);
            let lam = mult.ineq[m * nj + j];
            if !b.is_finite() {
                dual_sign = dual_sign.max(lam.abs() / gscale);
                continue;
            }
            let mut lhs = 0.0;
            for i in 0..ni {
                lhs += spec.u(i)[m] * x[i * nj + j];
            }
            primal = primal.max((lhs - b) / (1.0 + b.abs()));
            dual_sign = dual_sign.max(-lam / gscale);
            comp = comp.max(((b - lhs) * lam).abs() / ((1.0 + b.abs()) * gscale));
        }
    }
    for n in 0..nn {
        for j in 0..nj {
            let c = spec.c(n, j);
            let mut lhs = 0.0;
            for i in 0..ni {
                lhs += spec.v(i)[n] * x[i * nj + j];
            }
            primal = primal.max((lhs - c).abs() / (1.0 + c.abs()));
        }
    }

    let mut stationarity = 0.0f64;
    for i in 0..ni {
        for j in 0..nj {
            let mut r = grad[i * nj + j] - mult.bound[i * nj + j] + mult.simplex[i];
            for m in 0..nm {
                r += mult.ineq[m * nj + j] * spec.u(i)[m];
            }
            for n in 0..nn {
                r += mult.eq[n * nj + j] * spec.v(i)[n];
            }
            stationarity = stationarity.max(r.abs() / gscale);
        }
    }

    Ok(KktReport { primal: primal.max(0.0), dual_sign: dual_sign.max(0.0), stationarity, complementarity: comp })
}
