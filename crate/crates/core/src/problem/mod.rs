//! Instance data model, validation, item partitioning.

mod generate;
mod io;

pub use generate::{generate_synthetic, generate_uneven, CounterRng};
pub use io::{load_problem, read_manifest, save_problem, Manifest, PartitionEntry, FORMAT_VERSION};

use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objective::{ObjectiveError, ObjectiveModel};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("dimension-mismatch: {field} has {found} entries, expected {expected}")]
    DimensionMismatch { field: &'static str, expected: usize, found: usize },
    #[error("nonpositive-rho: rho = {0}")]
    NonPositiveRho(f64),
    #[error("beta-below-bound: beta = {beta} < (rho/2)*I*(M+N) = {bound}")]
    BetaBelowBound { beta: f64, bound: f64 },
    #[error("zero-equality-target: c[{n}][{owner}] is zero")]
    ZeroEqualityTarget { n: usize, owner: usize },
    #[error("non-finite value in {field} at index {index}")]
    NonFinite { field: &'static str, index: usize },
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("invalid-P: partition count {parts} not in [1, {items}]")]
    InvalidPartitionCount { parts: usize, items: usize },
    #[error("odd-I: uneven generation needs an even item count, got {0}")]
    OddItemCount(usize),
    #[error("objective: {0}")]
    Objective(#[from] ObjectiveError),
    #[error("io-failure: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed-manifest: {0}")]
    MalformedManifest(String),
    #[error("shard-checksum-mismatch: {0}")]
    ChecksumMismatch(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrality {
    Binary,
    #[default]
    Continuous,
}

/// A full problem instance.
///
/// Item rows are stored item-major with width `J + M + N`: the objective row
/// `ω_i`, then the inequality features `u_i`, then the equality features `v_i`.
/// Owner bounds `b` (M×J) and targets `c` (N×J) are row-major by constraint.
/// An entry of `b` equal to `+∞` marks that single constraint inactive.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub num_items: usize,
    pub num_owners: usize,
    pub num_ineq: usize,
    pub num_eq: usize,
    pub rows: Vec<T>,
    pub ineq_bounds: Vec<T>,
    pub eq_targets: Vec<T>,
    pub objective: ObjectiveModel<T>,
    pub rho: T,
    pub beta: T,
    /// Accept a `beta` below the sufficient bound instead of rejecting it.
    pub beta_override: bool,
    pub integrality: Integrality,
    /// Seed the instance was generated from, if any.
    pub seed: Option<u64>,
}

impl<T: Scalar> ProblemSpec<T> {
    #[inline]
    pub fn row_width(&self) -> usize {
        self.num_owners + self.num_ineq + self.num_eq
    }

    /// Number of combined (inequality + equality) constraint families.
    #[inline]
    pub fn num_combined(&self) -> usize {
        self.num_ineq + self.num_eq
    }

    #[inline]
    pub fn item_row(&self, i: usize) -> &[T] {
        let w = self.row_width();
        &self.rows[i * w..(i + 1) * w]
    }

    #[inline]
    pub fn omega(&self, i: usize) -> &[T] {
        &self.item_row(i)[..self.num_owners]
    }

    #[inline]
    pub fn u(&self, i: usize) -> &[T] {
        &self.item_row(i)[self.num_owners..self.num_owners + self.num_ineq]
    }

    #[inline]
    pub fn v(&self, i: usize) -> &[T] {
        &self.item_row(i)[self.num_owners + self.num_ineq..]
    }

    /// Combined constraint features `w_{s,i}`: `u_i` followed by `v_i`.
    #[inline]
    pub fn w(&self, i: usize) -> &[T] {
        &self.item_row(i)[self.num_owners..]
    }

    #[inline]
    pub fn b(&self, m: usize, j: usize) -> T {
        self.ineq_bounds[m * self.num_owners + j]
    }

    #[inline]
    pub fn c(&self, n: usize, j: usize) -> T {
        self.eq_targets[n * self.num_owners + j]
    }

    #[inline]
    pub fn is_active(&self, m: usize, j: usize) -> bool {
        self.b(m, j).is_finite()
    }

    /// Same instance in another precision.
    pub fn cast<U: Scalar>(&self) -> ProblemSpec<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect();
        ProblemSpec {
            num_items: self.num_items,
            num_owners: self.num_owners,
            num_ineq: self.num_ineq,
            num_eq: self.num_eq,
            rows: conv(&self.rows),
            ineq_bounds: conv(&self.ineq_bounds),
            eq_targets: conv(&self.eq_targets),
            objective: self.objective.cast(),
            rho: U::lit(self.rho.as_f64()),
            beta: U::lit(self.beta.as_f64()),
            beta_override: self.beta_override,
            integrality: self.integrality,
            seed: self.seed,
        }
    }

    /// `(ρ/2)·I·(M+N)`.
    pub fn beta_bound(&self) -> T {
        self.beta_bound_for(self.rho)
    }

    /// `(ρ/2)·I·(M+N)` for a penalty other than the stored one.
    pub fn beta_bound_for(&self, rho: T) -> T {
        T::lit(0.5) * rho * T::from_usize_lossy(self.num_items) * T::from_usize_lossy(self.num_combined())
    }

    /// Partition count used when none is given: four per worker.
    pub fn default_partitions(&self, workers: usize) -> usize {
        (workers.max(1) * 4).min(self.num_items).max(1)
    }
}

/// Checks every structural and numeric invariant of an instance.
pub fn validate<T: Scalar>(spec: ProblemSpec<T>) -> Result<ProblemSpec<T>, ProblemError> {
    let (i, j, m, n) = (spec.num_items, spec.num_owners, spec.num_ineq, spec.num_eq);
    if i == 0 || j == 0 {
        return Err(ProblemError::InvalidDimension(format!("I = {i}, J = {j}; both must be positive")));
    }
    let expect = |field, expected, found| {
        if expected == found {
            Ok(())
        } else {
            Err(ProblemError::DimensionMismatch { field, expected, found })
        }
    };
    expect("item_rows", i * (j + m + n), spec.rows.len())?;
    expect("b", m * j, spec.ineq_bounds.len())?;
    expect("c", n * j, spec.eq_targets.len())?;
    spec.objective.check_params(j)?;

    if let Some(k) = spec.rows.iter().position(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { field: "item_rows", index: k });
    }
    // +inf is the inactive sentinel; everything else must be finite.
    if let Some(k) = spec.ineq_bounds.iter().position(|v| v.is_nan() || *v == T::neg_infinity()) {
        return Err(ProblemError::NonFinite { field: "b", index: k });
    }
    if let Some(k) = spec.eq_targets.iter().position(|v| !v.is_finite()) {
        return Err(ProblemError::NonFinite { field: "c", index: k });
    }
    if let Some(k) = spec.eq_targets.iter().position(|v| v.is_zero()) {
        return Err(ProblemError::ZeroEqualityTarget { n: k / j, owner: k % j });
    }
    if !(spec.rho > T::zero()) {
        return Err(ProblemError::NonPositiveRho(spec.rho.as_f64()));
    }
    let bound = spec.beta_bound();
    // Relative slack absorbs rounding in hand-written or recomputed bounds.
    if !(spec.beta > T::zero()) || spec.beta < bound * (T::one() - T::lit(1e-12)) {
        if spec.beta_override && spec.beta > T::zero() {
            log::warn!("beta {} below sufficient bound {}; proceeding under override", spec.beta, bound);
        } else {
            return Err(ProblemError::BetaBelowBound { beta: spec.beta.as_f64(), bound: bound.as_f64() });
        }
    }
    Ok(spec)
}

/// A contiguous block of items `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    pub id: usize,
    pub lo: usize,
    pub hi: usize,
}

impl Partition {
    #[inline]
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.hi == self.lo
    }

    #[inline]
    pub fn range(&self) -> Range<usize> {
        self.lo..self.hi
    }

    /// This partition's slice of the item rows.
    pub fn rows<'a, T: Scalar>(&self, spec: &'a ProblemSpec<T>) -> &'a [T] {
        let w = spec.row_width();
        &spec.rows[self.lo * w..self.hi * w]
    }
}

/// Splits `num_items` into `parts` contiguous ranges whose sizes differ by at most one.
pub fn partition_items(num_items: usize, parts: usize) -> Result<Vec<Partition>, ProblemError> {
    if parts == 0 || parts > num_items {
        return Err(ProblemError::InvalidPartitionCount { parts, items: num_items });
    }
    let base = num_items / parts;
    let extra = num_items % parts;
    let mut out = Vec::with_capacity(parts);
    let mut lo = 0;
    for id in 0..parts {
        let len = base + usize::from(id < extra);
        out.push(Partition { id, lo, hi: lo + len });
        lo += len;
    }
    Ok(out)
}

pub fn partition<T: Scalar>(spec: &ProblemSpec<T>, parts: usize) -> Result<Vec<Partition>, ProblemError> {
    partition_items(spec.num_items, parts)
}
