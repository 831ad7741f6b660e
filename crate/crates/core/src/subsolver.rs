//! Per-item diagonal quadratic over the capped probability simplex.
//!
//! Solves `min Σ_j γ_j x_j² + η_j x_j  s.t.  Σ_j x_j ≤ 1, x ≥ 0` through its
//! concave dual in the simplex multiplier `π ≥ 0`. The dual is piecewise
//! quadratic with kinks at `t_j = -η_j`; after sorting those breakpoints a
//! binary search brackets the maximizer and a closed form inside the bracket
//! finishes it, for `O(J log J)` per item.

use thiserror::Error;

use crate::scalar::Scalar;

/// Smallest curvature accepted; anything below indicates a missing `β`.
pub const MIN_GAMMA: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SubsolverError {
    #[error("nonpositive-gamma: gamma[{index}] = {value}")]
    NonPositiveGamma { index: usize, value: f64 },
    #[error("gamma has {gamma} entries but eta has {eta}")]
    LengthMismatch { gamma: usize, eta: usize },
    #[error("no-convergence after {steps} projected-gradient steps (residual {residual:e})")]
    NoConvergence { steps: usize, residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexQpInstance<T> {
    pub gamma: Vec<T>,
    pub eta: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexQpSolution<T> {
    pub x: Vec<T>,
    /// Optimal multiplier of `Σ x ≤ 1`.
    pub pi: T,
}

/// Reusable buffer so batched solves do not allocate per item.
#[derive(Debug, Default, Clone)]
pub struct SimplexScratch<T> {
    breakpoints: Vec<T>,
}

impl<T: Scalar> SimplexScratch<T> {
    pub fn with_capacity(j: usize) -> Self {
        Self { breakpoints: Vec::with_capacity(j + 1) }
    }
}

fn check<T: Scalar>(gamma: &[T], eta: &[T]) -> Result<(), SubsolverError> {
    if gamma.len() != eta.len() {
        return Err(SubsolverError::LengthMismatch { gamma: gamma.len(), eta: eta.len() });
    }
    let floor = T::lit(MIN_GAMMA);
    for (index, &g) in gamma.iter().enumerate() {
        if !(g >= floor) {
            return Err(SubsolverError::NonPositiveGamma { index, value: g.as_f64() });
        }
    }
    Ok(())
}

/// `Σ_j max(0, -(η_j + π) / (2γ_j))`, the primal mass at multiplier `π`.
#[inline]
fn mass<T: Scalar>(gamma: &[T], eta: &[T], pi: T) -> T {
    let two = T::lit(2.0);
    gamma.iter().zip(eta).fold(T::zero(), |acc, (&g, &e)| {
        let v = -(e + pi) / (two * g);
        if v > T::zero() { acc + v } else { acc }
    })
}

/// Dual function `D(π) = Σ_{j: η_j+π<0} -(η_j+π)²/(4γ_j) - π`.
pub fn dual_objective<T: Scalar>(gamma: &[T], eta: &[T], pi: T) -> T {
    let four = T::lit(4.0);
    gamma.iter().zip(eta).fold(-pi, |acc, (&g, &e)| {
        let s = e + pi;
        if s < T::zero() { acc - s * s / (four * g) } else { acc }
    })
}

/// Maximizer of the dual on `[lo, hi]` restricted to the owners active there,
/// i.e. those with breakpoint `t_j ≥ hi`.
fn interval_candidate<T: Scalar>(gamma: &[T], eta: &[T], lo: T, hi: T) -> T {
    let two = T::lit(2.0);
    let mut sum_ratio = T::zero();
    let mut sum_inv = T::zero();
    for (&g, &e) in gamma.iter().zip(eta) {
        if -e >= hi {
            sum_ratio = sum_ratio + e / (two * g);
            sum_inv = sum_inv + (two * g).recip();
        }
    }
    if sum_inv.is_zero() {
        return lo;
    }
    let free = -(sum_ratio + T::one()) / sum_inv;
    free.max(lo).min(hi)
}

/// Optimal simplex multiplier `π* ≥ 0`.
pub fn dual_search<T: Scalar>(inst: &SimplexQpInstance<T>) -> Result<T, SubsolverError> {
    check(&inst.gamma, &inst.eta)?;
    let mut scratch = SimplexScratch::with_capacity(inst.gamma.len());
    Ok(dual_search_unchecked(&inst.gamma, &inst.eta, &mut scratch))
}

fn dual_search_unchecked<T: Scalar>(gamma: &[T], eta: &[T], scratch: &mut SimplexScratch<T>) -> T {
    if mass(gamma, eta, T::zero()) <= T::one() {
        return T::zero();
    }
    let bp = &mut scratch.breakpoints;
    bp.clear();
    bp.push(T::zero());
    bp.extend(eta.iter().map(|&e| -e).filter(|&t| t > T::zero()));
    bp.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
    bp.dedup();

    // mass(bp[0]) > 1 and mass(bp[last]) = 0, so the crossing is bracketed.
    let (mut lo, mut hi) = (0usize, bp.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if mass(gamma, eta, bp[mid]) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let mut best = interval_candidate(gamma, eta, bp[lo], bp[hi]);
    let mut best_val = dual_objective(gamma, eta, best);
    // Neighbouring intervals guard against a bracket misplaced by rounding.
    let neighbours = [lo.checked_sub(1).map(|k| (k, k + 1)), (hi + 1 < bp.len()).then_some((hi, hi + 1))];
    for (a, b) in neighbours.into_iter().flatten() {
        let cand = interval_candidate(gamma, eta, bp[a], bp[b]);
        let val = dual_objective(gamma, eta, cand);
        if val > best_val {
            best = cand;
            best_val = val;
        }
    }
    best
}

/// Solves one item into `out`, returning `π*`. `out` must have the same length as `gamma`.
pub fn solve_simplex_qp_into<T: Scalar>(
    gamma: &[T],
    eta: &[T],
    out: &mut [T],
    scratch: &mut SimplexScratch<T>,
) -> Result<T, SubsolverError> {
    check(gamma, eta)?;
    let pi = dual_search_unchecked(gamma, eta, scratch);
    let two = T::lit(2.0);
    for ((o, &g), &e) in out.iter_mut().zip(gamma).zip(eta) {
        *o = (-(e + pi) / (two * g)).max(T::zero());
    }
    Ok(pi)
}

pub fn solve_simplex_qp<T: Scalar>(inst: &SimplexQpInstance<T>) -> Result<SimplexQpSolution<T>, SubsolverError> {
    let mut x = vec![T::zero(); inst.gamma.len()];
    let mut scratch = SimplexScratch::with_capacity(x.len());
    let pi = solve_simplex_qp_into(&inst.gamma, &inst.eta, &mut x, &mut scratch)?;
    Ok(SimplexQpSolution { x, pi })
}

/// Solves `count` items laid out row-major with `j` entries each.
pub fn solve_batch<T: Scalar>(gamma: &[T], eta: &[T], j: usize, out: &mut [T]) -> Result<(), SubsolverError> {
    let mut scratch = SimplexScratch::with_capacity(j);
    for ((g, e), o) in gamma.chunks(j).zip(eta.chunks(j)).zip(out.chunks_mut(j)) {
        solve_simplex_qp_into(g, e, o, &mut scratch)?;
    }
    Ok(())
}

/// Feasible region of a single item for the generic block solver.
pub enum LocalConstraint<'a, T> {
    /// `x ≥ 0, Σ x ≤ 1`
    Simplex,
    /// `0 ≤ x ≤ 1`
    Box,
    /// Caller-supplied Euclidean projection, applied in place.
    Projection(&'a (dyn Fn(&mut [T]) + Sync)),
}

#[derive(Debug, Clone, Copy)]
pub struct BlockSolverOptions {
    pub tolerance: f64,
    pub max_steps: usize,
}

impl Default for BlockSolverOptions {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_steps: 10_000 }
    }
}

/// Euclidean projection onto `{x ≥ 0, Σ x ≤ 1}` by the sort-and-threshold rule.
pub fn project_capped_simplex<T: Scalar>(y: &mut [T]) {
    let positive: T = y.iter().map(|&v| v.max(T::zero())).sum();
    if positive <= T::one() {
        for v in y.iter_mut() {
            *v = v.max(T::zero());
        }
        return;
    }
    let mut sorted: Vec<T> = y.to_vec();
    sorted.sort_unstable_by(|a, b| b.partial_cmp(a).expect("finite"));
    let mut cumulative = T::zero();
    let mut theta = T::zero();
    for (k, &v) in sorted.iter().enumerate() {
        cumulative = cumulative + v;
        let candidate = (cumulative - T::one()) / T::from_usize_lossy(k + 1);
        if v - candidate > T::zero() {
            theta = candidate;
        }
    }
    for v in y.iter_mut() {
        *v = (*v - theta).max(T::zero());
    }
}

fn project<T: Scalar>(constraint: &LocalConstraint<'_, T>, x: &mut [T]) {
    match constraint {
        LocalConstraint::Simplex => project_capped_simplex(x),
        LocalConstraint::Box => {
            for v in x.iter_mut() {
                *v = v.max(T::zero()).min(T::one());
            }
        }
        LocalConstraint::Projection(f) => f(x),
    }
}

fn quad_value<T: Scalar>(gamma: &[T], eta: &[T], x: &[T]) -> T {
    gamma.iter().zip(eta).zip(x).map(|((&g, &e), &v)| g * v * v + e * v).sum()
}

/// Projected gradient with backtracking for a single item under any [`LocalConstraint`].
///
/// Stops when `‖x − P(x − ∇q(x))‖ ≤ tolerance`.
pub fn solve_block_generic<T: Scalar>(
    gamma: &[T],
    eta: &[T],
    constraint: &LocalConstraint<'_, T>,
    opts: &BlockSolverOptions,
) -> Result<Vec<T>, SubsolverError> {
    check(gamma, eta)?;
    let two = T::lit(2.0);
    let n = gamma.len();
    let lipschitz = gamma.iter().fold(T::zero(), |m, &g| m.max(two * g));
    // Sufficient decrease is guaranteed at 1/L, so backtracking never goes below it.
    let min_step = lipschitz.recip();
    let mut step = min_step;
    let mut x = vec![T::zero(); n];
    project(constraint, &mut x);
    let mut grad = vec![T::zero(); n];
    let mut trial = vec![T::zero(); n];
    let mut residual = f64::INFINITY;

    for _ in 0..opts.max_steps {
        for k in 0..n {
            grad[k] = two * gamma[k] * x[k] + eta[k];
            trial[k] = x[k] - grad[k];
        }
        project(constraint, &mut trial);
        residual = x.iter().zip(&trial).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt().as_f64();
        if residual <= opts.tolerance {
            return Ok(x);
        }
        let fx = quad_value(gamma, eta, &x);
        step = step * two;
        loop {
            for k in 0..n {
                trial[k] = x[k] - step * grad[k];
            }
            project(constraint, &mut trial);
            let mut model = fx;
            for k in 0..n {
                let d = trial[k] - x[k];
                model = model + grad[k] * d + d * d / (two * step);
            }
            if step <= min_step || quad_value(gamma, eta, &trial) <= model {
                break;
            }
            step = (step / two).max(min_step);
        }
        x.copy_from_slice(&trial);
    }
    Err(SubsolverError::NoConvergence { steps: opts.max_steps, residual })
}
