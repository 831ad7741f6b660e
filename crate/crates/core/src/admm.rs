//! Bregman ADMM driver.
//!
//! Each iteration runs four steps against an immutable snapshot:
//! 1. primal update of every item (Jacobi, parallel over partitions),
//! 2. slack update `ξ = max(0, −Xᵀu + b − λ/ρ)`,
//! 3. multiplier updates for λ and μ,
//! 4. bookkeeping: trace row, checkpoint, stopping test.
//!
//! Inequalities and equalities are handled uniformly as "combined" constraints
//! `Xᵀw_s = d_s` with `w = [u, v]`, `d = [b − ξ, c]`, `ν = [λ, μ]`.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{debug, info, warn};
use thiserror::Error;

use crate::engine::{
    tree_reduce, CheckpointError, CheckpointRecord, CheckpointStore, DualBroadcast, Engine, EngineError, PartialSums,
    PartitionOutput, COORDINATOR_PARTITION,
};
use crate::eval::constraint_mapds;
use crate::objective::{Objective, ObjectiveError};
use crate::problem::{Partition, ProblemSpec};
use crate::scalar::Scalar;
use crate::subsolver::{solve_simplex_qp_into, SimplexScratch, SubsolverError};

#[derive(Debug, Error)]
pub enum AdmmError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Subsolver(#[from] SubsolverError),
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("checkpoint at iteration {iteration} does not match the problem: {reason}")]
    CheckpointShape { iteration: u64, reason: String },
    #[error("trace io error at {path}: {source}")]
    TraceIo { path: PathBuf, source: std::io::Error },
}

/// `(X, ξ, λ, μ)` at the end of iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationState<T> {
    pub t: usize,
    /// I×J row-major.
    pub x: Vec<T>,
    /// M×J row-major.
    pub xi: Vec<T>,
    /// M×J row-major.
    pub lambda: Vec<T>,
    /// N×J row-major.
    pub mu: Vec<T>,
}

impl<T: Scalar> IterationState<T> {
    pub fn zeros(spec: &ProblemSpec<T>) -> Self {
        let j = spec.num_owners;
        Self {
            t: 0,
            x: vec![T::zero(); spec.num_items * j],
            xi: vec![T::zero(); spec.num_ineq * j],
            lambda: vec![T::zero(); spec.num_ineq * j],
            mu: vec![T::zero(); spec.num_eq * j],
        }
    }

    /// Writes one record per partition plus the coordinator record.
    pub fn checkpoint(&self, store: &CheckpointStore, spec: &ProblemSpec<T>, parts: &[Partition]) -> Result<(), CheckpointError> {
        let j = spec.num_owners;
        let t = self.t as u32;
        for p in parts {
            let values = self.x[p.lo * j..p.hi * j].iter().map(|v| v.as_f64()).collect();
            store.write(&CheckpointRecord { iteration: t, partition_id: p.id as u32, row_count: p.len() as u64, values })?;
        }
        let values: Vec<f64> = self.xi.iter().chain(&self.lambda).chain(&self.mu).map(|v| v.as_f64()).collect();
        let row_count = (2 * spec.num_ineq + spec.num_eq) as u64;
        store.write(&CheckpointRecord { iteration: t, partition_id: COORDINATOR_PARTITION, row_count, values })?;
        Ok(())
    }

    pub fn restore(store: &CheckpointStore, t: u64, spec: &ProblemSpec<T>, parts: &[Partition]) -> Result<Self, AdmmError> {
        let j = spec.num_owners;
        let shape = |reason: String| AdmmError::CheckpointShape { iteration: t, reason };
        let mut state = Self::zeros(spec);
        state.t = t as usize;
        for p in parts {
            let rec = store.read(t, p.id as u32)?;
            if rec.row_count != p.len() as u64 || rec.values.len() != p.len() * j {
                return Err(shape(format!("partition {} holds {} rows, expected {}", p.id, rec.row_count, p.len())));
            }
            for (dst, &src) in state.x[p.lo * j..p.hi * j].iter_mut().zip(&rec.values) {
                *dst = T::lit(src);
            }
        }
        let coord = store.read(t, COORDINATOR_PARTITION)?;
        let (m, n) = (spec.num_ineq * j, spec.num_eq * j);
        if coord.values.len() != 2 * m + n {
            return Err(shape(format!("coordinator record holds {} values, expected {}", coord.values.len(), 2 * m + n)));
        }
        let lit = |s: &[f64]| s.iter().map(|&v| T::lit(v)).collect::<Vec<T>>();
        state.xi = lit(&coord.values[..m]);
        state.lambda = lit(&coord.values[m..2 * m]);
        state.mu = lit(&coord.values[2 * m..]);
        Ok(state)
    }
}

/// One combined constraint `Xᵀw_s = d_s` with multiplier `ν_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedConstraint<T> {
    /// Column of `w = [u, v]` in the item rows.
    pub s: usize,
    pub is_equality: bool,
    /// Right-hand side per owner; `+∞` marks an inactive inequality.
    pub d: Vec<T>,
    pub nu: Vec<T>,
}

/// `d = b − ξ, ν = λ` for inequalities followed by `d = c, ν = μ` for equalities.
pub fn combine_constraints<T: Scalar>(spec: &ProblemSpec<T>, state: &IterationState<T>) -> Vec<CombinedConstraint<T>> {
    let j = spec.num_owners;
    let mut out = Vec::with_capacity(spec.num_combined());
    for m in 0..spec.num_ineq {
        let d = (0..j).map(|k| spec.b(m, k) - state.xi[m * j + k]).collect();
        out.push(CombinedConstraint { s: m, is_equality: false, d, nu: state.lambda[m * j..(m + 1) * j].to_vec() });
    }
    for n in 0..spec.num_eq {
        out.push(CombinedConstraint {
            s: spec.num_ineq + n,
            is_equality: true,
            d: spec.eq_targets[n * j..(n + 1) * j].to_vec(),
            nu: state.mu[n * j..(n + 1) * j].to_vec(),
        });
    }
    out
}

/// Owner-side residuals `r_s = Xᵀw_s − d_s + ν_s/ρ`, S×J; zero for inactive entries.
pub fn owner_residuals<T: Scalar>(combined: &[CombinedConstraint<T>], lhs: &[T], rho: T, owners: usize) -> Vec<T> {
    let mut r = vec![T::zero(); combined.len() * owners];
    for c in combined {
        for k in 0..owners {
            let d = c.d[k];
            if d.is_finite() {
                r[c.s * owners + k] = lhs[c.s * owners + k] - d + c.nu[k] / rho;
            }
        }
    }
    r
}

/// `Σ_i w_{s,i} x_i` (S×J) and `z_j = Σ_i ω_ij x_ij` over `items`, accumulated in item order.
pub fn partition_sums<T: Scalar>(
    spec: &ProblemSpec<T>,
    items: std::ops::Range<usize>,
    new_rows: &[T],
    old_rows: Option<&[T]>,
) -> PartialSums<T> {
    let j = spec.num_owners;
    let s_count = spec.num_combined();
    let mut sums = PartialSums::zeros(s_count, j);
    for (k, i) in items.enumerate() {
        let x = &new_rows[k * j..(k + 1) * j];
        let w = spec.w(i);
        for (s, &ws) in w.iter().enumerate() {
            let acc = &mut sums.constraint_lhs[s * j..(s + 1) * j];
            for (a, &xv) in acc.iter_mut().zip(x) {
                *a = *a + ws * xv;
            }
        }
        for ((z, &om), &xv) in sums.owner_aggregate.iter_mut().zip(spec.omega(i)).zip(x) {
            *z = *z + om * xv;
        }
        if let Some(old) = old_rows {
            for (&a, &b) in x.iter().zip(&old[k * j..(k + 1) * j]) {
                let d = a - b;
                sums.squared_change = sums.squared_change + d * d;
            }
        }
    }
    sums
}

/// Global reductions of `X` in the same partition tree the engine uses.
pub fn reduce_snapshot<T: Scalar>(spec: &ProblemSpec<T>, x: &[T], parts: &[Partition]) -> PartialSums<T> {
    let j = spec.num_owners;
    let sums = parts.iter().map(|p| partition_sums(spec, p.range(), &x[p.lo * j..p.hi * j], None)).collect();
    tree_reduce(sums).unwrap_or_else(|| PartialSums::zeros(spec.num_combined(), j))
}

/// Row `i` of `B = f′(Xᵗ) − g′(Xᵗ) + ρ Σ_s w_s r_sᵀ`.
#[inline]
#[allow(clippy::too_many_arguments)]
pub fn b_row<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
    i: usize,
    x_old: &[T],
    residuals: &[T],
    owner_slope: &[T],
    rho: T,
    out: &mut [T],
) {
    let j_count = spec.num_owners;
    let two = T::lit(2.0);
    let w = spec.w(i);
    let omega = spec.omega(i);
    for j in 0..j_count {
        let mut pen = T::zero();
        for (s, &ws) in w.iter().enumerate() {
            pen = pen + ws * residuals[s * j_count + j];
        }
        let g_prime = two * objective.g_coeff(spec, i, j) * x_old[j] + objective.g_linear(spec, i, j);
        out[j] = owner_slope[j] * omega[j] - g_prime + rho * pen;
    }
}

/// Full `B` for the snapshot `x`. The solver never materializes this; it exists for inspection.
pub fn compute_b<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
    x: &[T],
    combined: &[CombinedConstraint<T>],
    rho: T,
) -> Result<Vec<T>, ObjectiveError> {
    let j = spec.num_owners;
    let whole = [Partition { id: 0, lo: 0, hi: spec.num_items }];
    let sums = reduce_snapshot(spec, x, &whole);
    let r = owner_residuals(combined, &sums.constraint_lhs, rho, j);
    let slope = objective.slope(&sums.owner_aggregate)?;
    let mut out = vec![T::zero(); x.len()];
    for i in 0..spec.num_items {
        b_row(spec, objective, i, &x[i * j..(i + 1) * j], &r, &slope, rho, &mut out[i * j..(i + 1) * j]);
    }
    Ok(out)
}

/// Solves the items of one partition against the broadcast snapshot.
pub fn update_partition<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
    x_snapshot: &[T],
    part: &Partition,
    broadcast: &DualBroadcast<T>,
) -> Result<PartitionOutput<T>, SubsolverError> {
    let j = spec.num_owners;
    let two = T::lit(2.0);
    let beta = broadcast.beta;
    let old = &x_snapshot[part.lo * j..part.hi * j];
    let mut rows = vec![T::zero(); old.len()];
    let mut gamma = vec![T::zero(); j];
    let mut eta = vec![T::zero(); j];
    let mut scratch = SimplexScratch::with_capacity(j);
    for (k, i) in part.range().enumerate() {
        let x_old = &old[k * j..(k + 1) * j];
        b_row(spec, objective, i, x_old, &broadcast.residuals, &broadcast.owner_slope, broadcast.rho, &mut eta);
        for jj in 0..j {
            gamma[jj] = objective.g_coeff(spec, i, jj) + beta;
            eta[jj] = eta[jj] + objective.g_linear(spec, i, jj) - two * beta * x_old[jj];
        }
        solve_simplex_qp_into(&gamma, &eta, &mut rows[k * j..(k + 1) * j], &mut scratch)?;
    }
    let sums = partition_sums(spec, part.range(), &rows, Some(old));
    Ok(PartitionOutput { rows, sums })
}

/// Serial primal step over all items; the engine runs the same kernel per partition.
pub fn primal_update<T: Scalar, O: Objective<T> + ?Sized>(
    spec: &ProblemSpec<T>,
    objective: &O,
    state: &IterationState<T>,
    rho: T,
    beta: T,
) -> Result<Vec<T>, AdmmError> {
    let whole = Partition { id: 0, lo: 0, hi: spec.num_items };
    let sums = reduce_snapshot(spec, &state.x, std::slice::from_ref(&whole));
    let combined = combine_constraints(spec, state);
    let broadcast = DualBroadcast {
        iteration: state.t + 1,
        residuals: owner_residuals(&combined, &sums.constraint_lhs, rho, spec.num_owners),
        owner_slope: objective.slope(&sums.owner_aggregate)?,
        beta,
        rho,
    };
    Ok(update_partition(spec, objective, &state.x, &whole, &broadcast)?.rows)
}

/// `Xᵀu_m` for every inequality, M×J, from the full matrix.
pub fn ineq_lhs<T: Scalar>(spec: &ProblemSpec<T>, x: &[T]) -> Vec<T> {
    let whole = [Partition { id: 0, lo: 0, hi: spec.num_items }];
    let mut lhs = reduce_snapshot(spec, x, &whole).constraint_lhs;
    lhs.truncate(spec.num_ineq * spec.num_owners);
    lhs
}

/// `Xᵀv_n` for every equality, N×J, from the full matrix.
pub fn eq_lhs<T: Scalar>(spec: &ProblemSpec<T>, x: &[T]) -> Vec<T> {
    let whole = [Partition { id: 0, lo: 0, hi: spec.num_items }];
    let lhs = reduce_snapshot(spec, x, &whole).constraint_lhs;
    lhs[spec.num_ineq * spec.num_owners..].to_vec()
}

/// `ξ = max(0, −Xᵀu + b − λ/ρ)` given `Xᵀu` (M×J). Inactive entries stay 0.
pub fn xi_update_from_lhs<T: Scalar>(spec: &ProblemSpec<T>, xu: &[T], lambda: &[T], rho: T) -> Vec<T> {
    let j = spec.num_owners;
    (0..spec.num_ineq * j)
        .map(|k| {
            let b = spec.ineq_bounds[k];
            if b.is_finite() {
                (-xu[k] + b - lambda[k] / rho).max(T::zero())
            } else {
                T::zero()
            }
        })
        .collect()
}

pub fn xi_update<T: Scalar>(spec: &ProblemSpec<T>, x: &[T], lambda: &[T], rho: T) -> Vec<T> {
    xi_update_from_lhs(spec, &ineq_lhs(spec, x), lambda, rho)
}

/// Multiplier step given `Xᵀu` (M×J) and `Xᵀv` (N×J).
///
/// `ξ` must come from [`xi_update_from_lhs`] with the same `λ` and `ρ`. Wherever
/// `ξ > 0` the update is `λ − ρ·λ/ρ`, which is set to exactly 0.
pub fn dual_update_from_lhs<T: Scalar>(
    spec: &ProblemSpec<T>,
    xu: &[T],
    xv: &[T],
    xi: &[T],
    lambda: &[T],
    mu: &[T],
    rho: T,
) -> (Vec<T>, Vec<T>) {
    let new_lambda = (0..lambda.len())
        .map(|k| {
            let b = spec.ineq_bounds[k];
            if !b.is_finite() {
                T::zero()
            } else if xi[k] > T::zero() && rho > T::zero() {
                T::zero()
            } else {
                lambda[k] + rho * (xu[k] + xi[k] - b)
            }
        })
        .collect();
    let new_mu = (0..mu.len()).map(|k| mu[k] + rho * (xv[k] - spec.eq_targets[k])).collect();
    (new_lambda, new_mu)
}

pub fn dual_update<T: Scalar>(
    spec: &ProblemSpec<T>,
    x: &[T],
    xi: &[T],
    state: &IterationState<T>,
    rho: T,
) -> (Vec<T>, Vec<T>) {
    dual_update_from_lhs(spec, &ineq_lhs(spec, x), &eq_lhs(spec, x), xi, &state.lambda, &state.mu, rho)
}

/// Entries with `ξ > 10⁻¹²` but `|λ| ≥ 10⁻⁹`.
pub fn complementarity_violations<T: Scalar>(xi: &[T], lambda: &[T]) -> usize {
    xi.iter().zip(lambda).filter(|(&x, &l)| x.as_f64() > 1e-12 && l.as_f64().abs() >= 1e-9).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub ineq_mapd: f64,
    pub eq_mapd: f64,
    pub dual_residual: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { ineq_mapd: 1e-3, eq_mapd: 1e-3, dual_residual: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointConfig {
    pub dir: PathBuf,
    pub every: usize,
}

impl CheckpointConfig {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), every: 25 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// `None` runs exactly `max_iters` iterations.
    pub tolerances: Option<Tolerances>,
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    /// Record every k-th iteration; `None` picks 1 for I ≤ 10⁵ and 10 beyond.
    pub trace_every: Option<usize>,
    pub checkpoint: Option<CheckpointConfig>,
    /// Continue from the checkpoint written after this iteration.
    pub resume_from: Option<u64>,
    /// Sample the convexity of `g − f` before iterating.
    pub check_surrogate: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tolerances: Some(Tolerances::default()),
            rho: None,
            beta: None,
            trace_every: None,
            checkpoint: None,
            resume_from: None,
            check_surrogate: cfg!(debug_assertions),
        }
    }
}

impl SolverConfig {
    /// Exactly `iters` iterations, no early stop.
    pub fn fixed(iters: usize) -> Self {
        Self { max_iters: iters, tolerances: None, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub objective: f64,
    pub ineq_mapd: f64,
    pub eq_mapd: f64,
    pub dual_residual: f64,
    /// Milliseconds since the start of this solve call.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub const HEADER: &'static str = "iter,objective,ineq_mapd,eq_mapd,dual_residual,wall_ms";

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::HEADER)?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:.3}",
                r.iter, r.objective, r.ineq_mapd, r.eq_mapd, r.dual_residual, r.wall_ms
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), AdmmError> {
        let io = |source| AdmmError::TraceIo { path: path.to_path_buf(), source };
        let file = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }
}

#[derive(Debug, Clone)]
pub struct Solution<T> {
    pub state: IterationState<T>,
    pub trace: ConvergenceTrace,
    pub converged: bool,
    /// Iterations run by this call (excludes those before a resume point).
    pub iterations_run: usize,
    pub complementarity_violations: usize,
    /// Workers declared dead across all iterations.
    pub failed_workers: usize,
    pub requeued_partitions: usize,
    /// Wall time of each iteration in milliseconds.
    pub iteration_ms: Vec<f64>,
}

impl<T> Solution<T> {
    pub fn x(&self) -> &[T] {
        &self.state.x
    }
}

/// Runs ADMM with the objective stored in the spec.
pub fn solve<T: Scalar>(spec: &ProblemSpec<T>, config: &SolverConfig, engine: &Engine) -> Result<Solution<T>, AdmmError> {
    solve_with(spec, &spec.objective, config, engine)
}

/// Runs ADMM with any [`Objective`] implementation.
pub fn solve_with<T: Scalar, O: Objective<T>>(
    spec: &ProblemSpec<T>,
    objective: &O,
    config: &SolverConfig,
    engine: &Engine,
) -> Result<Solution<T>, AdmmError> {
    let j = spec.num_owners;
    let rho = config.rho.map(T::lit).unwrap_or(spec.rho);
    let beta = config.beta.map(T::lit).unwrap_or(spec.beta);
    if !(rho > T::zero()) || !(beta > T::zero()) {
        return Err(AdmmError::Config(format!("rho ({rho}) and beta ({beta}) must be positive")));
    }
    if beta < spec.beta_bound_for(rho) * T::lit(1.0 - 1e-12) && !spec.beta_override {
        warn!("beta {beta} is below the sufficient bound {}", spec.beta_bound_for(rho));
    }
    let parts = engine.partitions();
    let covered: usize = parts.iter().map(Partition::len).sum();
    if covered != spec.num_items || parts.last().map(|p| p.hi) != Some(spec.num_items) {
        return Err(AdmmError::Config(format!("engine partitions cover {covered} items, problem has {}", spec.num_items)));
    }
    if config.check_surrogate {
        check_surrogate(spec, objective);
    }
    let trace_every = config.trace_every.unwrap_or(if spec.num_items <= 100_000 { 1 } else { 10 }).max(1);
    let store = config.checkpoint.as_ref().map(|c| CheckpointStore::new(&c.dir));

    let mut state = match config.resume_from {
        Some(t) => {
            let store = store
                .as_ref()
                .ok_or_else(|| AdmmError::Config("resume requires a checkpoint directory".into()))?;
            info!("resuming from checkpoint at iteration {t}");
            IterationState::restore(store, t, spec, parts)?
        }
        None => IterationState::zeros(spec),
    };
    let mut sums = reduce_snapshot(spec, &state.x, parts);

    let start = Instant::now();
    let mut trace = ConvergenceTrace::default();
    let mut converged = false;
    let mut violations = 0;
    let mut failed_workers = 0;
    let mut requeued = 0;
    let mut iteration_ms = Vec::new();
    let first = state.t;
    let scale = T::from_usize_lossy(spec.num_items * j).sqrt();

    while state.t < config.max_iters {
        let iter_start = Instant::now();
        let t_next = state.t + 1;
        let combined = combine_constraints(spec, &state);
        let broadcast = DualBroadcast {
            iteration: t_next,
            residuals: owner_residuals(&combined, &sums.constraint_lhs, rho, j),
            owner_slope: objective.slope(&sums.owner_aggregate)?,
            beta,
            rho,
        };
        let snapshot = &state.x;
        let work = |p: &Partition, b: &DualBroadcast<T>| {
            update_partition(spec, objective, snapshot, p, b).map_err(|e| e.to_string())
        };
        let outcome = engine.run_iteration(broadcast, &work)?;
        failed_workers += outcome.report.failed_workers.len();
        requeued += outcome.report.requeued_partitions.len();
        if !outcome.report.is_empty() {
            debug!("iteration {t_next}: recovered partitions {:?}", outcome.report.requeued_partitions);
        }

        let mut x_new = Vec::with_capacity(state.x.len());
        for block in &outcome.blocks {
            x_new.extend_from_slice(block);
        }
        sums = outcome.sums;
        let (xu, xv) = sums.constraint_lhs.split_at(spec.num_ineq * j);
        let xi = xi_update_from_lhs(spec, xu, &state.lambda, rho);
        let (lambda, mu) = dual_update_from_lhs(spec, xu, xv, &xi, &state.lambda, &state.mu, rho);
        violations += complementarity_violations(&xi, &lambda);

        let objective_value = objective.value(&sums.owner_aggregate)?.as_f64();
        let mapds = constraint_mapds(spec, xu, xv);
        let dual_residual = (sums.squared_change.sqrt() / scale).as_f64();
        state = IterationState { t: t_next, x: x_new, xi, lambda, mu };
        iteration_ms.push(iter_start.elapsed().as_secs_f64() * 1e3);

        let stop = config.tolerances.is_some_and(|tol| {
            mapds.ineq <= tol.ineq_mapd && mapds.eq <= tol.eq_mapd && dual_residual <= tol.dual_residual
        });
        if t_next % trace_every == 0 || stop || t_next == config.max_iters || t_next == first + 1 {
            trace.rows.push(TraceRow {
                iter: t_next,
                objective: objective_value,
                ineq_mapd: mapds.ineq,
                eq_mapd: mapds.eq,
                dual_residual,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            });
        }
        if let (Some(cfg), Some(store)) = (&config.checkpoint, &store) {
            if cfg.every > 0 && t_next % cfg.every == 0 {
                state.checkpoint(store, spec, parts)?;
            }
        }
        if stop {
            converged = true;
            info!("converged at iteration {t_next}");
            break;
        }
    }

    Ok(Solution {
        iterations_run: state.t - first,
        state,
        trace,
        converged,
        complementarity_violations: violations,
        failed_workers,
        requeued_partitions: requeued,
        iteration_ms,
    })
}

/// Samples midpoint convexity of `g − f` on a leading slice of the items.
fn check_surrogate<T: Scalar, O: Objective<T>>(spec: &ProblemSpec<T>, objective: &O) {
    use rand::SeedableRng;
    let items = spec.num_items.min(8);
    let mut sub = spec.clone();
    sub.num_items = items;
    sub.rows.truncate(items * spec.row_width());
    sub.objective = sub.objective.clone().with_dominance(spec.objective.dominance.unwrap_or(spec.num_items));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    // Custom objectives read `spec.num_items` themselves, so only the slice is checked.
    match crate::objective::surrogate_convexity_defect(objective, &sub, 32, &mut rng) {
        Ok(defect) if defect > 1e-8 => {
            warn!("surrogate g − f failed a convexity sample (defect {defect:e}); ADMM may diverge")
        }
        Ok(_) => {}
        Err(e) => warn!("surrogate check skipped: {e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineConfig;
    use crate::objective::{ObjectiveKind, ObjectiveModel};
    use crate::problem::test_support::small_spec;
    use crate::problem::{partition_items, Integrality};
    use crate::subsolver::{solve_block_generic, BlockSolverOptions, LocalConstraint};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn engine(spec: &ProblemSpec<f64>, workers: usize, parts: usize) -> Engine {
        Engine::new(EngineConfig::with_workers(workers), partition_items(spec.num_items, parts).unwrap()).unwrap()
    }

    /// Random state with X on the simplex and nonnegative ξ.
    fn random_state(spec: &ProblemSpec<f64>, seed: u64) -> IterationState<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = spec.num_owners;
        let mut s = IterationState::zeros(spec);
        for row in s.x.chunks_mut(j) {
            for v in row.iter_mut() {
                *v = rng.gen::<f64>();
            }
            let total: f64 = row.iter().sum::<f64>() * (1.0 + rng.gen::<f64>());
            row.iter_mut().for_each(|v| *v /= total);
        }
        s.xi.iter_mut().for_each(|v| *v = rng.gen::<f64>());
        s.lambda.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
        s.mu.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
        s.t = 3;
        s
    }

    /// `(ρ/2) Σ_s ‖Xᵀw_s − d_s + ν_s/ρ‖²` over active entries, with naive loops.
    fn penalty(spec: &ProblemSpec<f64>, x: &[f64], combined: &[CombinedConstraint<f64>], rho: f64) -> f64 {
        let j = spec.num_owners;
        let mut acc = 0.0;
        for c in combined {
            for k in 0..j {
                if !c.d[k].is_finite() {
                    continue;
                }
                let lhs: f64 = (0..spec.num_items).map(|i| spec.w(i)[c.s] * x[i * j + k]).sum();
                let r = lhs - c.d[k] + c.nu[k] / rho;
                acc += r * r;
            }
        }
        0.5 * rho * acc
    }

    #[test]
    fn combined_rhs() {
        let spec = small_spec(ObjectiveKind::Quadratic, 5, 2, 1);
        let mut state = IterationState::zeros(&spec);
        let c = combine_constraints(&spec, &state);
        assert_eq!(c.len(), 2);
        assert_eq!(c[0].d, spec.ineq_bounds);
        assert_eq!(c[1].d, spec.eq_targets);
        state.xi = spec.ineq_bounds.clone();
        assert!(combine_constraints(&spec, &state)[0].d.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn combined_penalty_matches_separate_sums() {
        let spec = small_spec(ObjectiveKind::Quadratic, 7, 3, 2);
        let state = random_state(&spec, 4);
        let rho = spec.rho;
        let j = 3;
        let combined = combine_constraints(&spec, &state);
        let x = &state.x;
        let col = |f: &dyn Fn(usize) -> f64, k: usize| (0..7).map(|i| f(i) * x[i * j + k]).sum::<f64>();
        let mut ineq = 0.0;
        let mut eq = 0.0;
        for k in 0..j {
            let r = col(&|i| spec.u(i)[0], k) + state.xi[k] - spec.b(0, k) + state.lambda[k] / rho;
            ineq += r * r;
            let r = col(&|i| spec.v(i)[0], k) - spec.c(0, k) + state.mu[k] / rho;
            eq += r * r;
        }
        let both = 0.5 * rho * (ineq + eq);
        assert!((penalty(&spec, x, &combined, rho) - both).abs() < 1e-10 * both.abs().max(1.0));
    }

    #[test]
    fn b_for_linear_objective_is_penalty_only() {
        let spec = small_spec(ObjectiveKind::Linear, 6, 3, 3);
        let state = random_state(&spec, 1);
        let combined = combine_constraints(&spec, &state);
        let b = compute_b(&spec, &spec.objective, &state.x, &combined, spec.rho).unwrap();
        let lhs = reduce_snapshot(&spec, &state.x, &[Partition { id: 0, lo: 0, hi: 6 }]).constraint_lhs;
        let r = owner_residuals(&combined, &lhs, spec.rho, 3);
        for i in 0..6 {
            for k in 0..3 {
                let expect: f64 = (0..2).map(|s| spec.rho * spec.w(i)[s] * r[s * 3 + k]).sum();
                assert!((b[i * 3 + k] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn b_at_zero_closed_form() {
        let spec = small_spec(ObjectiveKind::Logarithmic, 5, 2, 8);
        let state = IterationState::zeros(&spec);
        let combined = combine_constraints(&spec, &state);
        let b = compute_b(&spec, &spec.objective, &state.x, &combined, spec.rho).unwrap();
        let f0 = spec.objective.f_grad(&spec, &state.x).unwrap();
        let g0 = spec.objective.g_grad(&spec, &state.x);
        for i in 0..5 {
            for k in 0..2 {
                let pen: f64 = combined.iter().map(|c| spec.w(i)[c.s] * c.d[k]).sum();
                let expect = f0[i * 2 + k] - g0[i * 2 + k] - spec.rho * pen;
                assert!((b[i * 2 + k] - expect).abs() < 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn surrogate_gradient_matches_augmented_lagrangian() {
        for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic, ObjectiveKind::Linear] {
            let spec = small_spec(kind, 8, 3, 21);
            let state = random_state(&spec, 5);
            let rho = spec.rho;
            let combined = combine_constraints(&spec, &state);
            let b = compute_b(&spec, &spec.objective, &state.x, &combined, rho).unwrap();
            let g = spec.objective.g_grad(&spec, &state.x);
            let smooth = |x: &[f64]| spec.objective.f_eval(&spec, x).unwrap() + penalty(&spec, x, &combined, rho);
            let h = 1e-5;
            for k in 0..state.x.len() {
                let mut xp = state.x.clone();
                let mut xm = state.x.clone();
                xp[k] += h;
                xm[k] -= h;
                let fd = (smooth(&xp) - smooth(&xm)) / (2.0 * h);
                let ours = b[k] + g[k];
                assert!((fd - ours).abs() <= 1e-4 * fd.abs().max(1.0), "{kind:?} k={k}: fd {fd} vs {ours}");
            }
        }
    }

    /// Ω = g − f + β‖X‖² − (ρ/2) Σ_s ‖Xᵀw_s‖², with its gradient.
    fn omega(spec: &ProblemSpec<f64>, x: &[f64], beta: f64) -> f64 {
        let j = spec.num_owners;
        let mut quad = 0.0;
        for s in 0..spec.num_combined() {
            for k in 0..j {
                let l: f64 = (0..spec.num_items).map(|i| spec.w(i)[s] * x[i * j + k]).sum();
                quad += l * l;
            }
        }
        spec.objective.g_eval(spec, x) - spec.objective.f_eval(spec, x).unwrap() + beta * x.iter().map(|v| v * v).sum::<f64>()
            - 0.5 * spec.rho * quad
    }

    fn omega_grad(spec: &ProblemSpec<f64>, x: &[f64], beta: f64) -> Vec<f64> {
        let j = spec.num_owners;
        let g = spec.objective.g_grad(spec, x);
        let f = spec.objective.f_grad(spec, x).unwrap();
        let mut out: Vec<f64> = (0..x.len()).map(|k| g[k] - f[k] + 2.0 * beta * x[k]).collect();
        for s in 0..spec.num_combined() {
            for k in 0..j {
                let l: f64 = (0..spec.num_items).map(|i| spec.w(i)[s] * x[i * j + k]).sum();
                for i in 0..spec.num_items {
                    out[i * j + k] -= spec.rho * spec.w(i)[s] * l;
                }
            }
        }
        out
    }

    fn bregman(spec: &ProblemSpec<f64>, x: &[f64], y: &[f64], beta: f64) -> f64 {
        let gy = omega_grad(spec, y, beta);
        omega(spec, x, beta) - omega(spec, y, beta) - gy.iter().zip(x.iter().zip(y)).map(|(g, (a, b))| g * (a - b)).sum::<f64>()
    }

    #[test]
    fn bregman_identity_difference_is_constant() {
        for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
            let spec = small_spec(kind, 6, 3, 13);
            let state = random_state(&spec, 2);
            let (rho, beta) = (spec.rho, spec.beta);
            let combined = combine_constraints(&spec, &state);
            let b = compute_b(&spec, &spec.objective, &state.x, &combined, rho).unwrap();
            let decomposed = |x: &[f64]| {
                spec.objective.g_eval(&spec, x)
                    + b.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
                    + beta * x.iter().zip(&state.x).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
            };
            let linearized = |x: &[f64]| {
                spec.objective.f_eval(&spec, x).unwrap() + penalty(&spec, x, &combined, rho) + bregman(&spec, x, &state.x, beta)
            };
            let mut diffs = vec![];
            let mut scale: f64 = 1.0;
            for k in 0..20 {
                let x = random_state(&spec, 100 + k).x;
                let (a, l) = (decomposed(&x), linearized(&x));
                scale = scale.max(a.abs()).max(l.abs());
                diffs.push(a - l);
            }
            let spread = diffs.iter().cloned().fold(f64::MIN, f64::max) - diffs.iter().cloned().fold(f64::MAX, f64::min);
            assert!(spread < 1e-6 * scale, "{kind:?}: spread {spread}, scale {scale}");
        }
    }

    #[test]
    fn bregman_nonnegative_at_beta_bound() {
        for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
            let spec = small_spec(kind, 8, 3, 17);
            let beta = spec.beta_bound();
            for k in 0..200 {
                let x = random_state(&spec, 2 * k).x;
                let y = random_state(&spec, 2 * k + 1).x;
                assert!(bregman(&spec, &x, &y, beta) >= -1e-9);
            }
        }
    }

    #[test]
    fn beta_bound_dominates_spectral_radius() {
        let spec = small_spec(ObjectiveKind::Quadratic, 10, 2, 9);
        let n = spec.num_items;
        // Power iteration on Σ_s w_s w_sᵀ (I×I).
        let mut v = vec![1.0; n];
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut next = vec![0.0; n];
            for s in 0..spec.num_combined() {
                let d: f64 = (0..n).map(|i| spec.w(i)[s] * v[i]).sum();
                for (i, o) in next.iter_mut().enumerate() {
                    *o += spec.w(i)[s] * d;
                }
            }
            lambda = next.iter().map(|a| a * a).sum::<f64>().sqrt();
            v = next.iter().map(|a| a / lambda).collect();
        }
        assert!(spec.beta_bound() >= 0.5 * spec.rho * lambda);
    }

    #[test]
    fn huge_beta_freezes_x() {
        let spec = small_spec(ObjectiveKind::Quadratic, 6, 3, 4);
        let state = random_state(&spec, 3);
        let x = primal_update(&spec, &spec.objective, &state, spec.rho, 1e12).unwrap();
        let change = x.iter().zip(&state.x).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(change < 1e-6, "{change}");
    }

    #[test]
    fn single_item_matches_generic_solver() {
        let spec = small_spec(ObjectiveKind::Logarithmic, 1, 4, 6);
        let state = random_state(&spec, 8);
        let x = primal_update(&spec, &spec.objective, &state, spec.rho, spec.beta).unwrap();
        let combined = combine_constraints(&spec, &state);
        let b = compute_b(&spec, &spec.objective, &state.x, &combined, spec.rho).unwrap();
        let gamma: Vec<f64> = (0..4).map(|k| spec.objective.g_coeff(&spec, 0, k) + spec.beta).collect();
        let eta: Vec<f64> = (0..4).map(|k| b[k] + spec.objective.g_linear(&spec, 0, k) - 2.0 * spec.beta * state.x[k]).collect();
        let generic = solve_block_generic(&gamma, &eta, &LocalConstraint::Simplex, &BlockSolverOptions::default()).unwrap();
        for (a, b) in x.iter().zip(&generic) {
            assert!((a - b).abs() < 1e-6, "{x:?} vs {generic:?}");
        }
    }

    #[test]
    fn primal_step_does_not_increase_surrogate() {
        let spec = small_spec(ObjectiveKind::Quadratic, 5, 3, 10);
        let state = random_state(&spec, 12);
        let combined = combine_constraints(&spec, &state);
        let b = compute_b(&spec, &spec.objective, &state.x, &combined, spec.rho).unwrap();
        let surrogate = |x: &[f64]| {
            spec.objective.g_eval(&spec, x)
                + b.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
                + spec.beta * x.iter().zip(&state.x).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
        };
        let next = primal_update(&spec, &spec.objective, &state, spec.rho, spec.beta).unwrap();
        assert!(surrogate(&next) <= surrogate(&state.x) + 1e-12);
    }

    fn one_constraint_spec(b: f64) -> ProblemSpec<f64> {
        ProblemSpec {
            num_items: 1,
            num_owners: 1,
            num_ineq: 1,
            num_eq: 0,
            rows: vec![1.0, 1.0],
            ineq_bounds: vec![b],
            eq_targets: vec![],
            objective: ObjectiveModel::linear(),
            rho: 1.0,
            beta: 0.5,
            beta_override: false,
            integrality: Integrality::Continuous,
            seed: None,
        }
    }

    #[test]
    fn slack_clamp() {
        // l = −u·x + b − λ/ρ with u = 1, x = 0, ρ = 1
        let spec = one_constraint_spec(-1.0);
        assert_eq!(xi_update_from_lhs(&spec, &[0.0], &[1.0], 1.0), vec![0.0]); // l = −2
        let spec = one_constraint_spec(4.0);
        assert_eq!(xi_update_from_lhs(&spec, &[0.0], &[1.0], 1.0), vec![3.0]); // l = 3
        let spec = one_constraint_spec(f64::INFINITY);
        assert_eq!(xi_update_from_lhs(&spec, &[0.0], &[0.0], 1.0), vec![0.0]);
        let (lambda, _) = dual_update_from_lhs(&spec, &[0.5], &[], &[0.0], &[0.0], &[], 1.0);
        assert_eq!(lambda, vec![0.0]);
    }

    #[test]
    fn dual_step_examples() {
        let spec = small_spec(ObjectiveKind::Quadratic, 4, 2, 3);
        let state = random_state(&spec, 1);
        let rho = 0.37;
        let xi = xi_update(&spec, &state.x, &state.lambda, rho);
        let (lambda, mu) = dual_update(&spec, &state.x, &xi, &state, rho);
        for k in 0..xi.len() {
            if xi[k] > 0.0 {
                assert_eq!(lambda[k], 0.0);
            }
        }
        // Equality met exactly → μ unchanged.
        let mut exact = spec.clone();
        exact.eq_targets = eq_lhs(&spec, &state.x);
        let (_, mu_same) = dual_update(&exact, &state.x, &xi, &state, rho);
        assert_eq!(mu_same, state.mu);
        assert_ne!(mu, state.mu);
        // ρ = 0 leaves both untouched.
        let (l0, m0) = dual_update(&spec, &state.x, &xi, &state, 0.0);
        assert_eq!((l0, m0), (state.lambda.clone(), state.mu.clone()));
    }

    #[test]
    fn single_variable_equality_converges() {
        // min 0.2·x s.t. x = 0.5: the only feasible point is the minimizer.
        let spec = ProblemSpec {
            num_items: 1,
            num_owners: 1,
            num_ineq: 0,
            num_eq: 1,
            rows: vec![0.2, 1.0],
            ineq_bounds: vec![],
            eq_targets: vec![0.5],
            objective: ObjectiveModel::linear(),
            rho: 0.1,
            beta: 0.05,
            beta_override: false,
            integrality: Integrality::Continuous,
            seed: None,
        };
        let sol = solve(&spec, &SolverConfig::fixed(200), &engine(&spec, 1, 1)).unwrap();
        assert!((sol.x()[0] - 0.5).abs() < 1e-9, "{}", sol.x()[0]);
        assert!(sol.trace.last().unwrap().eq_mapd < 1e-3);
        let first_ok = sol.trace.rows.iter().find(|r| r.eq_mapd < 1e-3).unwrap().iter;
        assert!(first_ok <= 200);
    }

    #[test]
    fn complementarity_holds_every_iteration() {
        for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
            let spec = small_spec(kind, 40, 4, 31);
            let sol = solve(&spec, &SolverConfig::fixed(150), &engine(&spec, 2, 5)).unwrap();
            assert_eq!(sol.complementarity_violations, 0);
            assert_eq!(sol.trace.rows.len(), 150);
        }
    }

    #[test]
    fn tolerances_stop_early() {
        let spec = small_spec(ObjectiveKind::Quadratic, 30, 3, 2);
        let cfg = SolverConfig {
            max_iters: 5000,
            tolerances: Some(Tolerances { ineq_mapd: 1.0, eq_mapd: 1.0, dual_residual: 1e-3 }),
            ..SolverConfig::default()
        };
        let sol = solve(&spec, &cfg, &engine(&spec, 1, 2)).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations_run < 5000);
        assert!(sol.trace.last().unwrap().dual_residual <= 1e-3);
    }

    #[test]
    fn trace_is_bit_identical_across_worker_counts() {
        let spec = small_spec(ObjectiveKind::Logarithmic, 50, 3, 7);
        let run = |w| {
            let sol = solve(&spec, &SolverConfig::fixed(60), &engine(&spec, w, 6)).unwrap();
            let rows: Vec<_> = sol.trace.rows.iter().map(|r| (r.objective.to_bits(), r.ineq_mapd.to_bits(), r.eq_mapd.to_bits(), r.dual_residual.to_bits())).collect();
            (rows, sol.state)
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(1));
    }

    #[test]
    fn checkpoint_replay() {
        let spec = small_spec(ObjectiveKind::Quadratic, 25, 3, 19);
        let dir = tempfile::tempdir().unwrap();
        let ckpt = CheckpointConfig { dir: dir.path().join("checkpoints"), every: 25 };
        let full = solve(&spec, &SolverConfig { checkpoint: Some(ckpt.clone()), ..SolverConfig::fixed(100) }, &engine(&spec, 2, 4)).unwrap();
        let resumed = solve(
            &spec,
            &SolverConfig { checkpoint: Some(ckpt), resume_from: Some(50), ..SolverConfig::fixed(100) },
            &engine(&spec, 2, 4),
        )
        .unwrap();
        assert_eq!(resumed.iterations_run, 50);
        let strip = |rows: &[TraceRow]| rows.iter().map(|r| TraceRow { wall_ms: 0.0, ..*r }).collect::<Vec<_>>();
        assert_eq!(strip(&full.trace.rows[50..]), strip(&resumed.trace.rows));
        assert_eq!(full.state, resumed.state);
    }

    #[test]
    fn restore_missing_iteration() {
        let spec = small_spec(ObjectiveKind::Quadratic, 5, 2, 1);
        let dir = tempfile::tempdir().unwrap();
        let cfg = SolverConfig { checkpoint: Some(CheckpointConfig::new(dir.path())), resume_from: Some(7), ..SolverConfig::fixed(10) };
        let err = solve(&spec, &cfg, &engine(&spec, 1, 1)).unwrap_err();
        assert!(matches!(err, AdmmError::Checkpoint(CheckpointError::MissingRecord { iteration: 7, .. })));
    }

    #[test]
    fn f32_solve_tracks_f64() {
        let spec = small_spec(ObjectiveKind::Quadratic, 20, 3, 5);
        let s32: ProblemSpec<f32> = spec.cast();
        let e = engine(&spec, 1, 2);
        let a = solve(&spec, &SolverConfig::fixed(100), &e).unwrap();
        let b = solve(&s32, &SolverConfig::fixed(100), &e).unwrap();
        let (fa, fb) = (a.trace.last().unwrap().objective, b.trace.last().unwrap().objective);
        assert!((fa - fb).abs() < 1e-3 * fa.abs().max(1.0), "{fa} vs {fb}");
    }

    #[test]
    fn trace_csv_header() {
        let trace = ConvergenceTrace { rows: vec![TraceRow { iter: 1, objective: 2.0, ineq_mapd: 0.0, eq_mapd: 0.5, dual_residual: 1e-3, wall_ms: 1.25 }] };
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,objective,ineq_mapd,eq_mapd,dual_residual,wall_ms"));
        assert!(lines.next().unwrap().starts_with("1,2e0,0e0,5e-1,1e-3,"));
    }

    #[test]
    fn partition_mismatch_is_rejected() {
        let spec = small_spec(ObjectiveKind::Quadratic, 10, 2, 1);
        let e = Engine::new(EngineConfig::default(), partition_items(9, 2).unwrap()).unwrap();
        assert!(matches!(solve(&spec, &SolverConfig::fixed(1), &e), Err(AdmmError::Config(_))));
    }
}
