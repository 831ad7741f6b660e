//! Objective models and their separable surrogates.
//!
//! Every model here has the owner-aggregate form
//! `f(X) = Σ_j φ_j(z_j)` with `z_j = Σ_i ω_ij x_ij`, where `ω` is the per-item
//! objective row stored in [`ProblemSpec`]. That form lets a partitioned solver
//! evaluate `f` and `f'` from a length-J reduction instead of the full matrix.
//!
//! The surrogate `g(X) = Σ_ij a_ij x_ij² + l_ij x_ij` is chosen so that
//! `g - f` is convex on the feasible box.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::problem::ProblemSpec;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("log-domain: argument {value} of ln for owner {owner} is not positive")]
    LogDomain { owner: usize, value: f64 },
    #[error("objective expects {expected} per-owner parameters, got {found}")]
    ParameterCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// `½ Σ_j (ω_jᵀ x_j + α_j)²`
    Quadratic,
    /// `-Σ_j ln(ω_jᵀ x_j + a_j)`
    Logarithmic,
    /// `Σ_ij p_ij x_ij`, with `p` stored in the objective row.
    Linear,
}

impl ObjectiveKind {
    pub fn name(self) -> &'static str {
        match self {
            ObjectiveKind::Quadratic => "quadratic",
            ObjectiveKind::Logarithmic => "logarithmic",
            ObjectiveKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quadratic" | "quad" => Ok(ObjectiveKind::Quadratic),
            "logarithmic" | "log" => Ok(ObjectiveKind::Logarithmic),
            "linear" | "lin" => Ok(ObjectiveKind::Linear),
            other => Err(format!("unknown objective kind '{other}'")),
        }
    }
}

/// Plug-in contract for objectives.
///
/// Implementors describe `f` through its owner aggregates `z_j = ω_jᵀ x_j`.
/// The provided methods (`f_eval`, `f_grad`, `g_grad`) derive the full-matrix
/// forms from those, so a custom model only has to supply the scalar pieces.
pub trait Objective<T: Scalar>: Send + Sync {
    /// `f` as a function of the owner aggregates.
    fn value(&self, z: &[T]) -> Result<T, ObjectiveError>;

    /// `φ_j'(z_j)` for every owner.
    fn slope(&self, z: &[T]) -> Result<Vec<T>, ObjectiveError>;

    /// `φ_j''(z_j)` for every owner. Used by the reference solver.
    fn curvature(&self, z: &[T]) -> Result<Vec<T>, ObjectiveError>;

    /// Quadratic surrogate coefficient `a_ij ≥ 0`.
    fn g_coeff(&self, spec: &ProblemSpec<T>, i: usize, j: usize) -> T;

    /// Linear surrogate coefficient `l_ij`; zero unless `g` carries a linear part.
    fn g_linear(&self, _spec: &ProblemSpec<T>, _i: usize, _j: usize) -> T {
        T::zero()
    }

    fn f_eval(&self, spec: &ProblemSpec<T>, x: &[T]) -> Result<T, ObjectiveError> {
        self.value(&owner_aggregates(spec, x))
    }

    fn f_grad(&self, spec: &ProblemSpec<T>, x: &[T]) -> Result<Vec<T>, ObjectiveError> {
        let slope = self.slope(&owner_aggregates(spec, x))?;
        let j_count = spec.num_owners;
        let mut out = vec![T::zero(); spec.num_items * j_count];
        for (i, row) in out.chunks_mut(j_count).enumerate() {
            for ((o, w), s) in row.iter_mut().zip(spec.omega(i)).zip(&slope) {
                *o = *s * *w;
            }
        }
        Ok(out)
    }

    /// Surrogate value `g(X)`.
    fn g_eval(&self, spec: &ProblemSpec<T>, x: &[T]) -> T {
        let j_count = spec.num_owners;
        let mut acc = T::zero();
        for (i, row) in x.chunks(j_count).enumerate() {
            for (j, &xij) in row.iter().enumerate() {
                acc = acc + self.g_coeff(spec, i, j) * xij * xij + self.g_linear(spec, i, j) * xij;
            }
        }
        acc
    }

    fn g_grad(&self, spec: &ProblemSpec<T>, x: &[T]) -> Vec<T> {
        let j_count = spec.num_owners;
        let two = T::lit(2.0);
        let mut out = vec![T::zero(); x.len()];
        for (i, (orow, xrow)) in out.chunks_mut(j_count).zip(x.chunks(j_count)).enumerate() {
            for (j, (o, &xij)) in orow.iter_mut().zip(xrow).enumerate() {
                *o = two * self.g_coeff(spec, i, j) * xij + self.g_linear(spec, i, j);
            }
        }
        out
    }
}

/// `z_j = Σ_i ω_ij x_ij`.
pub fn owner_aggregates<T: Scalar>(spec: &ProblemSpec<T>, x: &[T]) -> Vec<T> {
    let j_count = spec.num_owners;
    let mut z = vec![T::zero(); j_count];
    for (i, row) in x.chunks(j_count).enumerate() {
        for ((zj, w), xij) in z.iter_mut().zip(spec.omega(i)).zip(row) {
            *zj = *zj + *w * *xij;
        }
    }
    z
}

/// Built-in objective: one of the three kinds plus its per-owner scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveModel<T> {
    pub kind: ObjectiveKind,
    /// `α_j` (quadratic) or `a_j` (logarithmic); empty for linear.
    pub params: Vec<T>,
    /// Dimension `D` in the surrogate coefficients. `None` means `D = I`.
    pub dominance: Option<usize>,
}

impl<T: Scalar> ObjectiveModel<T> {
    pub fn quadratic(alpha: Vec<T>) -> Self {
        Self { kind: ObjectiveKind::Quadratic, params: alpha, dominance: None }
    }

    pub fn logarithmic(a: Vec<T>) -> Self {
        Self { kind: ObjectiveKind::Logarithmic, params: a, dominance: None }
    }

    pub fn linear() -> Self {
        Self { kind: ObjectiveKind::Linear, params: Vec::new(), dominance: None }
    }

    /// Same model in another precision.
    pub fn cast<U: Scalar>(&self) -> ObjectiveModel<U> {
        ObjectiveModel { kind: self.kind, params: self.params.iter().map(|v| U::lit(v.as_f64())).collect(), dominance: self.dominance }
    }

    pub fn with_dominance(mut self, d: usize) -> Self {
        self.dominance = Some(d);
        self
    }

    pub fn expected_params(&self, num_owners: usize) -> usize {
        match self.kind {
            ObjectiveKind::Linear => 0,
            _ => num_owners,
        }
    }

    pub fn check_params(&self, num_owners: usize) -> Result<(), ObjectiveError> {
        let expected = self.expected_params(num_owners);
        if self.params.len() != expected {
            return Err(ObjectiveError::ParameterCount { expected, found: self.params.len() });
        }
        Ok(())
    }

    fn dominance_for(&self, spec: &ProblemSpec<T>) -> T {
        T::from_usize_lossy(self.dominance.unwrap_or(spec.num_items))
    }
}

impl<T: Scalar> Objective<T> for ObjectiveModel<T> {
    fn value(&self, z: &[T]) -> Result<T, ObjectiveError> {
        let half = T::lit(0.5);
        match self.kind {
            ObjectiveKind::Quadratic => Ok(z
                .iter()
                .zip(&self.params)
                .map(|(&zj, &al)| {
                    let s = zj + al;
                    half * s * s
                })
                .sum()),
            ObjectiveKind::Logarithmic => {
                let mut acc = T::zero();
                for (j, (&zj, &a)) in z.iter().zip(&self.params).enumerate() {
                    let arg = zj + a;
                    if arg <= T::zero() {
                        return Err(ObjectiveError::LogDomain { owner: j, value: arg.as_f64() });
                    }
                    acc = acc - arg.ln();
                }
                Ok(acc)
            }
            ObjectiveKind::Linear => Ok(z.iter().copied().sum()),
        }
    }

    fn slope(&self, z: &[T]) -> Result<Vec<T>, ObjectiveError> {
        match self.kind {
            ObjectiveKind::Quadratic => Ok(z.iter().zip(&self.params).map(|(&zj, &al)| zj + al).collect()),
            ObjectiveKind::Logarithmic => z
                .iter()
                .zip(&self.params)
                .enumerate()
                .map(|(j, (&zj, &a))| {
                    let arg = zj + a;
                    if arg <= T::zero() {
                        Err(ObjectiveError::LogDomain { owner: j, value: arg.as_f64() })
                    } else {
                        Ok(-arg.recip())
                    }
                })
                .collect(),
            ObjectiveKind::Linear => Ok(vec![T::one(); z.len()]),
        }
    }

    fn curvature(&self, z: &[T]) -> Result<Vec<T>, ObjectiveError> {
        match self.kind {
            ObjectiveKind::Quadratic => Ok(vec![T::one(); z.len()]),
            ObjectiveKind::Logarithmic => z
                .iter()
                .zip(&self.params)
                .enumerate()
                .map(|(j, (&zj, &a))| {
                    let arg = zj + a;
                    if arg <= T::zero() {
                        Err(ObjectiveError::LogDomain { owner: j, value: arg.as_f64() })
                    } else {
                        Ok((arg * arg).recip())
                    }
                })
                .collect(),
            ObjectiveKind::Linear => Ok(vec![T::zero(); z.len()]),
        }
    }

    #[inline]
    fn g_coeff(&self, spec: &ProblemSpec<T>, i: usize, j: usize) -> T {
        let w = spec.omega(i)[j];
        let half = T::lit(0.5);
        match self.kind {
            ObjectiveKind::Quadratic => half * self.dominance_for(spec) * w * w,
            ObjectiveKind::Logarithmic => {
                let a = self.params[j];
                self.dominance_for(spec) / (T::lit(2.0) * a * a) * w * w
            }
            ObjectiveKind::Linear => T::zero(),
        }
    }

    #[inline]
    fn g_linear(&self, spec: &ProblemSpec<T>, i: usize, j: usize) -> T {
        match self.kind {
            ObjectiveKind::Linear => spec.omega(i)[j],
            _ => T::zero(),
        }
    }
}

/// Worst midpoint-convexity defect of `Ω₁ = g − f` over random pairs in the box.
///
/// Returns `max(Ω₁(mid) − ½Ω₁(X) − ½Ω₁(Y))`; a convex `Ω₁` gives a value ≤ 0
/// up to rounding.
pub fn surrogate_convexity_defect<T, O, R>(
    model: &O,
    spec: &ProblemSpec<T>,
    pairs: usize,
    rng: &mut R,
) -> Result<f64, ObjectiveError>
where
    T: Scalar,
    O: Objective<T> + ?Sized,
    R: Rng + ?Sized,
{
    let n = spec.num_items * spec.num_owners;
    let omega1 = |x: &[T]| -> Result<f64, ObjectiveError> {
        Ok(model.g_eval(spec, x).as_f64() - model.f_eval(spec, x)?.as_f64())
    };
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..pairs {
        let x: Vec<T> = (0..n).map(|_| T::lit(rng.gen::<f64>())).collect();
        let y: Vec<T> = (0..n).map(|_| T::lit(rng.gen::<f64>())).collect();
        let mid: Vec<T> = x.iter().zip(&y).map(|(&a, &b)| (a + b) * T::lit(0.5)).collect();
        let defect = omega1(&mid)? - 0.5 * omega1(&x)? - 0.5 * omega1(&y)?;
        worst = worst.max(defect);
    }
    Ok(worst)
}
