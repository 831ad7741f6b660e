//! Synthetic instance generators.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{validate, Integrality, ProblemError, ProblemSpec};
use crate::objective::{ObjectiveKind, ObjectiveModel};
use crate::scalar::Scalar;

/// Counter-based generator used for every random draw in the crate.
///
/// This is ChaCha20 keyed by the 64-bit seed (expanded with the `rand_core`
/// `seed_from_u64` PCG32 schedule) with the 64-bit stream id selecting an
/// independent keystream. Output depends only on `(seed, stream, position)`,
/// so draws are reproducible across platforms and independent of thread
/// scheduling or partitioning.
#[derive(Debug, Clone)]
pub struct CounterRng(ChaCha20Rng);

impl CounterRng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self(rng)
    }

    /// Uniform draw in `[lo, hi)`.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.0.gen::<f64>()
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        self.0.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.0.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.0.try_fill_bytes(dest)
    }
}

/// Uniform instance: `ω, v ~ U[0,1]`, `u ~ U[-1,0]`, `b = -0.3·I/J`, `c = 0.3·I/J`.
///
/// Quadratic models use `α_j = 1e-4·I`, `ρ = 1e-3`; logarithmic models use
/// `a_j = 0.1·I`, `ρ = 1e-5`. `β` is set to its sufficient bound `(ρ/2)·I·(M+N)`,
/// with `M+N` taken as 1 when both are zero.
pub fn generate_synthetic<T: Scalar>(
    items: usize,
    owners: usize,
    num_ineq: usize,
    num_eq: usize,
    kind: ObjectiveKind,
    seed: u64,
) -> Result<ProblemSpec<T>, ProblemError> {
    generate(items, owners, num_ineq, num_eq, kind, seed, items)
}

/// Like [`generate_synthetic`], but the second half of the items has its
/// coefficients drawn from ranges ten times wider.
pub fn generate_uneven<T: Scalar>(
    items: usize,
    owners: usize,
    num_ineq: usize,
    num_eq: usize,
    kind: ObjectiveKind,
    seed: u64,
) -> Result<ProblemSpec<T>, ProblemError> {
    if items % 2 != 0 {
        return Err(ProblemError::OddItemCount(items));
    }
    generate(items, owners, num_ineq, num_eq, kind, seed, items / 2)
}

fn generate<T: Scalar>(
    items: usize,
    owners: usize,
    num_ineq: usize,
    num_eq: usize,
    kind: ObjectiveKind,
    seed: u64,
    baseline_items: usize,
) -> Result<ProblemSpec<T>, ProblemError> {
    if items == 0 || owners == 0 {
        return Err(ProblemError::InvalidDimension(format!("I = {items}, J = {owners}; both must be positive")));
    }
    let (param, rho) = match kind {
        ObjectiveKind::Quadratic => (1e-4 * items as f64, 1e-3),
        ObjectiveKind::Logarithmic => (1e-1 * items as f64, 1e-5),
        ObjectiveKind::Linear => {
            return Err(ProblemError::InvalidDimension("synthetic generation supports quadratic and logarithmic objectives".into()))
        }
    };
    let mut rng = CounterRng::new(seed);
    let width = owners + num_ineq + num_eq;
    let mut rows = Vec::with_capacity(items * width);
    for i in 0..items {
        let scale = if i < baseline_items { 1.0 } else { 10.0 };
        for _ in 0..owners {
            rows.push(T::lit(rng.uniform(0.0, scale)));
        }
        for _ in 0..num_ineq {
            rows.push(T::lit(rng.uniform(-scale, 0.0)));
        }
        for _ in 0..num_eq {
            rows.push(T::lit(rng.uniform(0.0, scale)));
        }
    }
    let rhs = 0.3 * items as f64 / owners as f64;
    let params = vec![T::lit(param); owners];
    let objective = match kind {
        ObjectiveKind::Quadratic => ObjectiveModel::quadratic(params),
        _ => ObjectiveModel::logarithmic(params),
    };
    let rho = T::lit(rho);
    // Without coupling constraints the bound is zero; keep β positive.
    let beta = T::lit(0.5) * rho * T::from_usize_lossy(items) * T::from_usize_lossy((num_ineq + num_eq).max(1));
    validate(ProblemSpec {
        num_items: items,
        num_owners: owners,
        num_ineq,
        num_eq,
        rows,
        ineq_bounds: vec![T::lit(-rhs); num_ineq * owners],
        eq_targets: vec![T::lit(rhs); num_eq * owners],
        objective,
        rho,
        beta,
        beta_override: false,
        integrality: Integrality::Continuous,
        seed: Some(seed),
    })
}
