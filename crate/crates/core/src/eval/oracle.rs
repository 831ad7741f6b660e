//! Reference solver for the continuous relaxation.
//!
//! Primal-dual interior point (Mehrotra predictor-corrector) on
//!
//! ```text
//! min f(X)  s.t.  X ≥ 0,  Σ_j x_ij ≤ 1,  x_jᵀu_m ≤ b_mj,  x_jᵀv_n = c_nj
//! ```
//!
//! The Newton matrix `H = ∇²f + Z_x/X + Σ_i σ_i 1 1ᵀ + Σ_a τ_a ũ_a ũ_aᵀ` is a
//! block-diagonal part `P` (one J×J "diagonal plus all-ones" block per item,
//! inverted by Sherman-Morrison) plus a rank-K part living in owner columns
//! (objective curvature and owner inequalities), handled by Woodbury. Equalities
//! enter through a small Schur complement. Each solve is followed by iterative
//! refinement against the exact `H`.

use nalgebra::{DMatrix, DVector};

use super::kkt::{check_kkt, KktMultipliers, KktReport};
use super::EvalError;
use crate::objective::{owner_aggregates, Objective};
use crate::problem::ProblemSpec;
use crate::scalar::Scalar;

pub const ORACLE_MAX_ITEMS: usize = 5000;

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Internal stopping tolerance on scaled residuals and the barrier parameter.
    pub tolerance: f64,
    /// Bound the independent KKT check must meet for the result to be returned.
    pub kkt_tolerance: f64,
    pub max_iters: usize,
    pub max_items: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self { tolerance: 1e-9, kkt_tolerance: 1e-6, max_iters: 200, max_items: ORACLE_MAX_ITEMS }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub multipliers: KktMultipliers,
    pub iterations: usize,
    pub kkt: KktReport,
}

/// Solves the relaxation of `spec` with its own objective model, in f64.
pub fn oracle_solve<T: Scalar>(spec: &ProblemSpec<T>) -> Result<OracleSolution, EvalError> {
    let spec64: ProblemSpec<f64> = spec.cast();
    oracle_solve_with(&spec64, &spec64.objective, &OracleOptions::default())
}

pub fn oracle_solve_with<O: Objective<f64> + ?Sized>(
    spec: &ProblemSpec<f64>,
    objective: &O,
    opts: &OracleOptions,
) -> Result<OracleSolution, EvalError> {
    if spec.num_items > opts.max_items {
        return Err(EvalError::SizeGuard { what: "items", value: spec.num_items as f64, limit: opts.max_items as f64 });
    }
    Ipm::new(spec, objective).run(opts)
}

/// A rank-one term `ũ ũᵀ` supported on one owner column.
struct ColumnTerm {
    owner: usize,
    /// Length I, already scaled by the square root of its weight.
    values: Vec<f64>,
}

struct Ipm<'a, O: ?Sized> {
    spec: &'a ProblemSpec<f64>,
    objective: &'a O,
    ni: usize,
    nj: usize,
    /// Active inequality entries `(m, j)`.
    active: Vec<(usize, usize)>,
}

#[derive(Clone)]
struct Point {
    x: Vec<f64>,
    zx: Vec<f64>,
    s_simp: Vec<f64>,
    z_simp: Vec<f64>,
    s_own: Vec<f64>,
    z_own: Vec<f64>,
    y: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    dzx: Vec<f64>,
    ds_simp: Vec<f64>,
    dz_simp: Vec<f64>,
    ds_own: Vec<f64>,
    dz_own: Vec<f64>,
    dy: Vec<f64>,
}

struct Residuals {
    grad: Vec<f64>,
    dual: Vec<f64>,
    simp: Vec<f64>,
    own: Vec<f64>,
    eq: Vec<f64>,
}

struct NewtonSystem<'s> {
    ni: usize,
    nj: usize,
    diag: Vec<f64>,
    sigma: Vec<f64>,
    terms: Vec<ColumnTerm>,
    /// `P⁻¹ũ_k` for every column term.
    p_inv_terms: Vec<Vec<f64>>,
    capacitance: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Equality rows as column terms (unscaled `v_n` in column j).
    eq_rows: Vec<ColumnTerm>,
    h_inv_at: Vec<Vec<f64>>,
    schur: Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>,
    _spec: std::marker::PhantomData<&'s ()>,
}

fn dot_column(term: &ColumnTerm, v: &[f64], nj: usize) -> f64 {
    term.values.iter().enumerate().map(|(i, &u)| u * v[i * nj + term.owner]).sum()
}

fn axpy_column(term: &ColumnTerm, alpha: f64, out: &mut [f64], nj: usize) {
    for (i, &u) in term.values.iter().enumerate() {
        out[i * nj + term.owner] += alpha * u;
    }
}

fn cholesky_with_shift(mut m: DMatrix<f64>, what: &str) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, EvalError> {
    let scale = (0..m.nrows()).map(|k| m[(k, k)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..8 {
        if let Some(c) = m.clone().cholesky() {
            return Ok(c);
        }
        let next = if shift == 0.0 { 1e-14 * scale } else { shift * 100.0 };
        for k in 0..m.nrows() {
            m[(k, k)] += next - shift;
        }
        shift = next;
    }
    Err(EvalError::Singular(format!("{what} is not positive definite")))
}

impl<'s> NewtonSystem<'s> {
    fn build(ni: usize, nj: usize, diag: Vec<f64>, sigma: Vec<f64>, terms: Vec<ColumnTerm>, eq_rows: Vec<ColumnTerm>) -> Result<Self, EvalError> {
        let mut sys = Self {
            ni,
            nj,
            diag,
            sigma,
            terms,
            p_inv_terms: Vec::new(),
            capacitance: DMatrix::<f64>::identity(1, 1).cholesky().expect("identity"),
            eq_rows,
            h_inv_at: Vec::new(),
            schur: None,
            _spec: std::marker::PhantomData,
        };
        let n = ni * nj;
        let k = sys.terms.len();
        let mut p_inv_terms = Vec::with_capacity(k);
        for t in &sys.terms {
            let mut e = vec![0.0; n];
            axpy_column(t, 1.0, &mut e, nj);
            let mut out = vec![0.0; n];
            sys.p_inv(&e, &mut out);
            p_inv_terms.push(out);
        }
        let mut cap = DMatrix::<f64>::identity(k.max(1), k.max(1));
        for a in 0..k {
            for b in 0..=a {
                let v = dot_column(&sys.terms[a], &p_inv_terms[b], nj);
                cap[(a, b)] += v;
                if a != b {
                    cap[(b, a)] += v;
                }
            }
        }
        sys.capacitance = cholesky_with_shift(cap, "capacitance matrix")?;
        sys.p_inv_terms = p_inv_terms;

        let ne = sys.eq_rows.len();
        if ne > 0 {
            let mut h_inv_at = Vec::with_capacity(ne);
            for r in &sys.eq_rows {
                let mut e = vec![0.0; n];
                axpy_column(r, 1.0, &mut e, nj);
                h_inv_at.push(sys.h_inv(&e));
            }
            let mut schur = DMatrix::<f64>::zeros(ne, ne);
            for a in 0..ne {
                for b in 0..ne {
                    schur[(a, b)] = dot_column(&sys.eq_rows[a], &h_inv_at[b], nj);
                }
            }
            let sym = (&schur + schur.transpose()) * 0.5;
            sys.schur = Some(cholesky_with_shift(sym, "equality Schur complement")?);
            sys.h_inv_at = h_inv_at;
        }
        Ok(sys)
    }

    /// `P⁻¹ r` with `P = diag(d) + Σ_i σ_i 1_i 1_iᵀ`.
    ///
    /// Per block, with `q = 1/d`: `o_k = q_k (r_k/σ + Σ_l q_l (r_k − r_l)) / (1/σ + Σ_l q_l)`.
    /// This is Sherman-Morrison with the `r_k/d_k` terms cancelled analytically,
    /// which stays accurate when `σ` and `1/d` are both huge.
    fn p_inv(&self, r: &[f64], out: &mut [f64]) {
        let nj = self.nj;
        for i in 0..self.ni {
            let d = &self.diag[i * nj..(i + 1) * nj];
            let ri = &r[i * nj..(i + 1) * nj];
            let o = &mut out[i * nj..(i + 1) * nj];
            let sigma = self.sigma[i];
            if sigma == 0.0 {
                for k in 0..nj {
                    o[k] = ri[k] / d[k];
                }
                continue;
            }
            let inv_sigma = 1.0 / sigma;
            let sum_q: f64 = d.iter().map(|v| 1.0 / v).sum();
            let denom = inv_sigma + sum_q;
            for k in 0..nj {
                let mut acc = ri[k] * inv_sigma;
                for l in 0..nj {
                    if l != k {
                        acc += (ri[k] - ri[l]) / d[l];
                    }
                }
                o[k] = acc / (d[k] * denom);
            }
        }
    }

    fn h_inv(&self, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; r.len()];
        self.p_inv(r, &mut out);
        let k = self.terms.len();
        if k > 0 {
            let rhs = DVector::from_iterator(k, self.terms.iter().map(|t| dot_column(t, &out, self.nj)));
            let coef = self.capacitance.solve(&rhs);
            for (w, &c) in self.p_inv_terms.iter().zip(coef.iter()) {
                for (o, &wv) in out.iter_mut().zip(w) {
                    *o -= c * wv;
                }
            }
        }
        out
    }

    fn h_apply(&self, v: &[f64]) -> Vec<f64> {
        let nj = self.nj;
        let mut out: Vec<f64> = v.iter().zip(&self.diag).map(|(a, d)| a * d).collect();
        for i in 0..self.ni {
            let s: f64 = v[i * nj..(i + 1) * nj].iter().sum();
            for o in &mut out[i * nj..(i + 1) * nj] {
                *o += self.sigma[i] * s;
            }
        }
        for t in &self.terms {
            let d = dot_column(t, v, nj);
            axpy_column(t, d, &mut out, nj);
        }
        out
    }

    fn solve_once(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let ne = self.eq_rows.len();
        if ne == 0 {
            return (self.h_inv(r1), Vec::new());
        }
        let h_inv_r1 = self.h_inv(r1);
        let rhs = DVector::from_iterator(ne, (0..ne).map(|a| dot_column(&self.eq_rows[a], &h_inv_r1, self.nj) - r2[a]));
        let dy = self.schur.as_ref().expect("schur built when equalities exist").solve(&rhs);
        let mut dx = h_inv_r1;
        for (w, &c) in self.h_inv_at.iter().zip(dy.iter()) {
            for (o, &wv) in dx.iter_mut().zip(w) {
                *o -= c * wv;
            }
        }
        (dx, dy.iter().copied().collect())
    }

    /// Solves `[H Aᵀ; A 0][dx; dy] = [r1; r2]` with two refinement passes.
    fn solve(&self, r1: &[f64], r2: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut dx, mut dy) = self.solve_once(r1, r2);
        for _ in 0..2 {
            let mut res1 = self.h_apply(&dx);
            for (row, &c) in self.eq_rows.iter().zip(&dy) {
                axpy_column(row, c, &mut res1, self.nj);
            }
            for (r, &t) in res1.iter_mut().zip(r1) {
                *r = t - *r;
            }
            let res2: Vec<f64> = self.eq_rows.iter().zip(r2).map(|(row, &t)| t - dot_column(row, &dx, self.nj)).collect();
            let (cx, cy) = self.solve_once(&res1, &res2);
            for (a, b) in dx.iter_mut().zip(&cx) {
                *a += b;
            }
            for (a, b) in dy.iter_mut().zip(&cy) {
                *a += b;
            }
        }
        (dx, dy)
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).fold(1.0f64, |a, (&x, &d)| if d < 0.0 { a.min(-x / d) } else { a })
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

impl<'a, O: Objective<f64> + ?Sized> Ipm<'a, O> {
    fn new(spec: &'a ProblemSpec<f64>, objective: &'a O) -> Self {
        let active = (0..spec.num_ineq)
            .flat_map(|m| (0..spec.num_owners).map(move |j| (m, j)))
            .filter(|&(m, j)| spec.is_active(m, j))
            .collect();
        Self { spec, objective, ni: spec.num_items, nj: spec.num_owners, active }
    }

    fn u_column(&self, m: usize) -> Vec<f64> {
        (0..self.ni).map(|i| self.spec.u(i)[m]).collect()
    }

    fn v_column(&self, n: usize) -> Vec<f64> {
        (0..self.ni).map(|i| self.spec.v(i)[n]).collect()
    }

    fn omega_column(&self, j: usize) -> Vec<f64> {
        (0..self.ni).map(|i| self.spec.omega(i)[j]).collect()
    }

    fn residuals(&self, p: &Point) -> Result<Residuals, EvalError> {
        let (ni, nj) = (self.ni, self.nj);
        let grad = self.objective.f_grad(self.spec, &p.x)?;
        let mut dual: Vec<f64> = grad.iter().zip(&p.zx).map(|(g, z)| g - z).collect();
        for i in 0..ni {
            for o in &mut dual[i * nj..(i + 1) * nj] {
                *o += p.z_simp[i];
            }
        }
        let mut own = Vec::with_capacity(self.active.len());
        for (a, &(m, j)) in self.active.iter().enumerate() {
            let mut lhs = 0.0;
            for i in 0..ni {
                let u = self.spec.u(i)[m];
                lhs += u * p.x[i * nj + j];
                dual[i * nj + j] += p.z_own[a] * u;
            }
            own.push(lhs + p.s_own[a] - self.spec.b(m, j));
        }
        let mut eq = Vec::with_capacity(self.spec.num_eq * nj);
        for n in 0..self.spec.num_eq {
            for j in 0..nj {
                let mut lhs = 0.0;
                let y = p.y[n * nj + j];
                for i in 0..ni {
                    let v = self.spec.v(i)[n];
                    lhs += v * p.x[i * nj + j];
                    dual[i * nj + j] += y * v;
                }
                eq.push(lhs - self.spec.c(n, j));
            }
        }
        let simp = (0..ni).map(|i| p.x[i * nj..(i + 1) * nj].iter().sum::<f64>() + p.s_simp[i] - 1.0).collect();
        Ok(Residuals { grad, dual, simp, own, eq })
    }

    fn build_system(&self, p: &Point) -> Result<NewtonSystem<'static>, EvalError> {
        let (ni, nj) = (self.ni, self.nj);
        let z = owner_aggregates(self.spec, &p.x);
        let curvature = self.objective.curvature(&z)?;
        let diag_raw: Vec<f64> = p.zx.iter().zip(&p.x).map(|(z, x)| z / x).collect();
        let floor = 1e-14 * (1.0 + inf_norm(&diag_raw));
        let diag = diag_raw.into_iter().map(|d| d + floor).collect();
        let sigma = p.z_simp.iter().zip(&p.s_simp).map(|(z, s)| z / s).collect();
        let mut terms = Vec::new();
        for (j, &c) in curvature.iter().enumerate() {
            if c > 0.0 {
                let r = c.sqrt();
                terms.push(ColumnTerm { owner: j, values: self.omega_column(j).into_iter().map(|w| w * r).collect() });
            }
        }
        for (a, &(m, j)) in self.active.iter().enumerate() {
            let r = (p.z_own[a] / p.s_own[a]).sqrt();
            terms.push(ColumnTerm { owner: j, values: self.u_column(m).into_iter().map(|u| u * r).collect() });
        }
        let mut eq_rows = Vec::new();
        for n in 0..self.spec.num_eq {
            let v = self.v_column(n);
            for j in 0..nj {
                eq_rows.push(ColumnTerm { owner: j, values: v.clone() });
            }
        }
        NewtonSystem::build(ni, nj, diag, sigma, terms, eq_rows)
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        sys: &NewtonSystem<'_>,
        p: &Point,
        r: &Residuals,
        rcx: &[f64],
        rcs_simp: &[f64],
        rcs_own: &[f64],
    ) -> Direction {
        let (ni, nj) = (self.ni, self.nj);
        let mut r1: Vec<f64> = (0..ni * nj).map(|k| -r.dual[k] - rcx[k] / p.x[k]).collect();
        for i in 0..ni {
            let w = (p.z_simp[i] * r.simp[i] - rcs_simp[i]) / p.s_simp[i];
            for o in &mut r1[i * nj..(i + 1) * nj] {
                *o -= w;
            }
        }
        for (a, &(m, j)) in self.active.iter().enumerate() {
            let w = (p.z_own[a] * r.own[a] - rcs_own[a]) / p.s_own[a];
            for i in 0..ni {
                r1[i * nj + j] -= w * self.spec.u(i)[m];
            }
        }
        let r2: Vec<f64> = r.eq.iter().map(|e| -e).collect();
        let (dx, dy) = sys.solve(&r1, &r2);

        let dzx = (0..ni * nj).map(|k| (-rcx[k] - p.zx[k] * dx[k]) / p.x[k]).collect();
        let ds_simp: Vec<f64> = (0..ni).map(|i| -r.simp[i] - dx[i * nj..(i + 1) * nj].iter().sum::<f64>()).collect();
        let dz_simp = (0..ni).map(|i| (-rcs_simp[i] - p.z_simp[i] * ds_simp[i]) / p.s_simp[i]).collect();
        let ds_own: Vec<f64> = self
            .active
            .iter()
            .enumerate()
            .map(|(a, &(m, j))| -r.own[a] - (0..ni).map(|i| self.spec.u(i)[m] * dx[i * nj + j]).sum::<f64>())
            .collect();
        let dz_own = (0..self.active.len()).map(|a| (-rcs_own[a] - p.z_own[a] * ds_own[a]) / p.s_own[a]).collect();
        Direction { dx, dzx, ds_simp, dz_simp, ds_own, dz_own, dy }
    }

    fn step_bounds(p: &Point, d: &Direction) -> (f64, f64) {
        let primal = max_step(&p.x, &d.dx).min(max_step(&p.s_simp, &d.ds_simp)).min(max_step(&p.s_own, &d.ds_own));
        let dual = max_step(&p.zx, &d.dzx).min(max_step(&p.z_simp, &d.dz_simp)).min(max_step(&p.z_own, &d.dz_own));
        (primal, dual)
    }

    fn complementarity(p: &Point) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        dot(&p.x, &p.zx) + dot(&p.s_simp, &p.z_simp) + dot(&p.s_own, &p.z_own)
    }

    fn advance(p: &Point, d: &Direction, alpha: f64) -> Point {
        let mv = |v: &[f64], dv: &[f64]| v.iter().zip(dv).map(|(a, b)| a + alpha * b).collect();
        Point {
            x: mv(&p.x, &d.dx),
            zx: mv(&p.zx, &d.dzx),
            s_simp: mv(&p.s_simp, &d.ds_simp),
            z_simp: mv(&p.z_simp, &d.dz_simp),
            s_own: mv(&p.s_own, &d.ds_own),
            z_own: mv(&p.z_own, &d.dz_own),
            y: mv(&p.y, &d.dy),
        }
    }

    fn start(&self) -> Point {
        let (ni, nj) = (self.ni, self.nj);
        let x = vec![1.0 / (nj as f64 + 1.0); ni * nj];
        let s_own = self
            .active
            .iter()
            .map(|&(m, j)| {
                let lhs: f64 = (0..ni).map(|i| self.spec.u(i)[m] * x[i * nj + j]).sum();
                let b = self.spec.b(m, j);
                (b - lhs).max(1.0)
            })
            .collect();
        Point {
            zx: vec![1.0; ni * nj],
            s_simp: vec![1.0 / (nj as f64 + 1.0); ni],
            z_simp: vec![1.0; ni],
            z_own: vec![1.0; self.active.len()],
            s_own,
            y: vec![0.0; self.spec.num_eq * nj],
            x,
        }
    }

    fn multipliers(&self, p: &Point) -> KktMultipliers {
        let mut ineq = vec![0.0; self.spec.num_ineq * self.nj];
        for (a, &(m, j)) in self.active.iter().enumerate() {
            ineq[m * self.nj + j] = p.z_own[a];
        }
        KktMultipliers { bound: p.zx.clone(), simplex: p.z_simp.clone(), ineq, eq: p.y.clone() }
    }

    fn run(&self, opts: &OracleOptions) -> Result<OracleSolution, EvalError> {
        let n_comp = (self.ni * self.nj + self.ni + self.active.len()) as f64;
        let b_scale = 1.0 + self.active.iter().map(|&(m, j)| self.spec.b(m, j).abs()).fold(0.0, f64::max);
        let c_scale = 1.0 + inf_norm(&self.spec.eq_targets);
        let mut p = self.start();
        let mut iterations = 0;
        // Rounding eventually stalls progress near the optimum; keep the best iterate
        // and stop once it has not improved for a while close to the solution.
        let mut best: Option<(f64, Point)> = None;
        let mut since_best = 0;

        for it in 0..opts.max_iters {
            iterations = it;
            let r = self.residuals(&p)?;
            let gscale = 1.0 + inf_norm(&r.grad);
            let mu = Self::complementarity(&p) / n_comp;
            let primal = inf_norm(&r.simp).max(inf_norm(&r.own) / b_scale).max(inf_norm(&r.eq) / c_scale);
            let dual = inf_norm(&r.dual) / gscale;
            let merit = primal.max(dual).max(mu / gscale);
            if best.as_ref().is_none_or(|(m, _)| merit < *m) {
                best = Some((merit, p.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            let stalled = since_best >= 8 && best.as_ref().is_some_and(|(m, _)| *m < 1e-6);
            if merit <= opts.tolerance || stalled || !merit.is_finite() {
                break;
            }
            let sys = self.build_system(&p)?;

            let prod = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).collect::<Vec<f64>>();
            let (cx, cs, co) = (prod(&p.x, &p.zx), prod(&p.s_simp, &p.z_simp), prod(&p.s_own, &p.z_own));
            let aff = self.direction(&sys, &p, &r, &cx, &cs, &co);
            let (ap, ad) = Self::step_bounds(&p, &aff);
            let a_aff = ap.min(ad);
            let mu_aff = Self::complementarity(&Self::advance(&p, &aff, a_aff)) / n_comp;
            let sigma = (mu_aff / mu).powi(3).clamp(0.0, 1.0);

            let target = sigma * mu;
            let corr = |c: &[f64], d1: &[f64], d2: &[f64]| {
                c.iter().zip(d1).zip(d2).map(|((c, a), b)| c + a * b - target).collect::<Vec<f64>>()
            };
            let rcx = corr(&cx, &aff.dx, &aff.dzx);
            let rcs = corr(&cs, &aff.ds_simp, &aff.dz_simp);
            let rco = corr(&co, &aff.ds_own, &aff.dz_own);
            let dir = self.direction(&sys, &p, &r, &rcx, &rcs, &rco);
            let (ap, ad) = Self::step_bounds(&p, &dir);
            let mut alpha = (0.995 * ap.min(ad)).min(1.0);
            let mut next = Self::advance(&p, &dir, alpha);
            while self.objective.f_eval(self.spec, &next.x).is_err() && alpha > 1e-12 {
                alpha *= 0.5;
                next = Self::advance(&p, &dir, alpha);
            }
            p = next;
            iterations = it + 1;
        }

        if let Some((_, b)) = best {
            p = b;
        }
        let multipliers = self.multipliers(&p);
        let kkt = check_kkt(self.spec, self.objective, &p.x, &multipliers)?;
        if !(kkt.max() <= opts.kkt_tolerance) {
            return Err(EvalError::NoConvergence { iterations, residual: kkt.max() });
        }
        let objective = self.objective.f_eval(self.spec, &p.x)?;
        Ok(OracleSolution { x: p.x, objective, multipliers, iterations, kkt })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{ObjectiveKind, ObjectiveModel};
    use crate::problem::test_support::small_spec;
    use crate::problem::{generate_synthetic, Integrality};

    fn tiny_linear(p: f64, c: f64) -> ProblemSpec<f64> {
        ProblemSpec {
            num_items: 1,
            num_owners: 1,
            num_ineq: 0,
            num_eq: 1,
            rows: vec![p, 1.0],
            ineq_bounds: vec![],
            eq_targets: vec![c],
            objective: ObjectiveModel::linear(),
            rho: 1.0,
            beta: 0.5,
            beta_override: false,
            integrality: Integrality::Continuous,
            seed: None,
        }
    }

    #[test]
    fn one_variable_linear() {
        // min 2x, x = 0.5: the only feasible point
        let spec = tiny_linear(2.0, 0.5);
        let sol = oracle_solve(&spec).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-8);
        assert!((sol.objective - 1.0).abs() < 1e-8);
        assert!((sol.multipliers.eq[0] + 2.0).abs() < 1e-6);
    }

    #[test]
    fn two_item_linear_by_hand() {
        // min 3x₁ + x₂ s.t. x₁ + x₂ = 1.5, each in [0, 1] → x = (0.5, 1), f = 2.5
        let spec = ProblemSpec {
            num_items: 2,
            rows: vec![3.0, 1.0, 1.0, 1.0],
            eq_targets: vec![1.5],
            ..tiny_linear(0.0, 0.0)
        };
        let sol = oracle_solve(&spec).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-7 && (sol.x[1] - 1.0).abs() < 1e-7, "{:?}", sol.x);
        assert!((sol.objective - 2.5).abs() < 1e-7);
    }

    #[test]
    fn quadratic_fifty_items_certified() {
        let spec: ProblemSpec<f64> = generate_synthetic(50, 4, 2, 1, ObjectiveKind::Quadratic, 3).unwrap();
        let sol = oracle_solve(&spec).unwrap();
        let again = check_kkt(&spec, &spec.objective, &sol.x, &sol.multipliers).unwrap();
        assert!(again.max() <= 1e-6, "{again:?}");
    }

    #[test]
    fn logarithmic_and_inactive_entries() {
        let mut spec = small_spec(ObjectiveKind::Logarithmic, 12, 3, 5);
        spec.ineq_bounds[2] = f64::INFINITY;
        let sol = oracle_solve(&spec).unwrap();
        assert!(sol.kkt.max() <= 1e-6);
        assert_eq!(sol.multipliers.ineq[2], 0.0);
    }

    #[test]
    fn size_guard() {
        let spec = tiny_linear(1.0, 0.5);
        let mut big = spec.clone();
        big.num_items = 6000;
        assert!(matches!(
            oracle_solve_with(&big, &big.objective, &OracleOptions::default()),
            Err(EvalError::SizeGuard { .. })
        ));
    }
}
