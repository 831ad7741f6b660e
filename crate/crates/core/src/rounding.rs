//! Randomized rounding of a relaxed solution.
//!
//! Item `i` goes to owner `j` with probability `x_ij` and to nobody with the
//! remaining mass. Draws come from a counter RNG keyed by `(seed, item)`, so the
//! result does not depend on item order or partitioning.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::admm::{eq_lhs, ineq_lhs};
use crate::eval::{constraint_mapds, ConstraintMapd};
use crate::problem::{CounterRng, ProblemSpec};
use crate::scalar::Scalar;

/// Tolerance on `Σ_j x_ij − 1` before a row is rejected.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoundingError {
    #[error("row-sum-exceeds-tolerance: item {item} sums to {sum}")]
    RowSumExceedsTolerance { item: usize, sum: f64 },
    #[error("solution has {found} entries, expected {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("repeats must be at least 1")]
    NoRepeats,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryAssignment {
    /// Chosen owner per item, `None` for unassigned.
    pub owners: Vec<Option<u32>>,
}

impl BinaryAssignment {
    /// Dense 0/1 matrix, I×J row-major.
    pub fn to_matrix<T: Scalar>(&self, num_owners: usize) -> Vec<T> {
        let mut x = vec![T::zero(); self.owners.len() * num_owners];
        for (i, o) in self.owners.iter().enumerate() {
            if let Some(j) = o {
                x[i * num_owners + *j as usize] = T::one();
            }
        }
        x
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item_id,owner")?;
        for (i, o) in self.owners.iter().enumerate() {
            match o {
                Some(j) => writeln!(out, "{i},{j}")?,
                None => writeln!(out, "{i},-1")?,
            }
        }
        Ok(())
    }
}

/// Picks an owner for one row given a uniform draw `r ∈ [0, 1)`.
fn pick<T: Scalar>(row: &[T], item: usize, draw: f64) -> Result<Option<u32>, RoundingError> {
    let clamped = |v: T| v.as_f64().max(0.0);
    let sum: f64 = row.iter().map(|&v| clamped(v)).sum();
    if sum > 1.0 + ROW_SUM_TOLERANCE {
        return Err(RoundingError::RowSumExceedsTolerance { item, sum });
    }
    let scale = if sum > 1.0 { sum } else { 1.0 };
    let mut acc = 0.0;
    for (j, &v) in row.iter().enumerate() {
        acc += clamped(v) / scale;
        if draw < acc {
            return Ok(Some(j as u32));
        }
    }
    Ok(None)
}

/// Samples one assignment from `x` (I×J).
pub fn round_solution<T: Scalar>(x: &[T], num_owners: usize, seed: u64) -> Result<BinaryAssignment, RoundingError> {
    if num_owners == 0 || x.len() % num_owners != 0 {
        return Err(RoundingError::Dimension { expected: num_owners, found: x.len() });
    }
    let owners = x
        .chunks(num_owners)
        .enumerate()
        .map(|(i, row)| {
            let draw: f64 = CounterRng::with_stream(seed, i as u64).gen();
            pick(row, i, draw)
        })
        .collect::<Result<_, _>>()?;
    Ok(BinaryAssignment { owners })
}

/// Draws `repeats` assignments (seeds `seed, seed+1, …`) and keeps the one with
/// the smallest `ineq MAPD + eq MAPD`; ties keep the earliest.
pub fn round_best_of<T: Scalar>(
    spec: &ProblemSpec<T>,
    x: &[T],
    seed: u64,
    repeats: usize,
) -> Result<(BinaryAssignment, ConstraintMapd), RoundingError> {
    if repeats == 0 {
        return Err(RoundingError::NoRepeats);
    }
    let expected = spec.num_items * spec.num_owners;
    if x.len() != expected {
        return Err(RoundingError::Dimension { expected, found: x.len() });
    }
    let mut best: Option<(BinaryAssignment, ConstraintMapd)> = None;
    for r in 0..repeats as u64 {
        let a = round_solution(x, spec.num_owners, seed.wrapping_add(r))?;
        let xb: Vec<T> = a.to_matrix(spec.num_owners);
        let mapd = constraint_mapds(spec, &ineq_lhs(spec, &xb), &eq_lhs(spec, &xb));
        if best.as_ref().is_none_or(|(_, m)| mapd.ineq + mapd.eq < m.ineq + m.eq) {
            best = Some((a, mapd));
        }
    }
    Ok(best.expect("repeats ≥ 1"))
}
