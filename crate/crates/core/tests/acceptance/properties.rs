//! Property suites behind criterion 6, each with its own independent oracle.

use assign_core::admm::{combine_constraints, compute_b, CheckpointConfig, IterationState};
use assign_core::problem::{generate_synthetic, load_problem, save_problem};
use assign_core::subsolver::{solve_simplex_qp, SimplexQpInstance};
use assign_core::{partition, round_solution, solve, Engine, EngineConfig, Objective, ObjectiveKind, ProblemSpec, SolverConfig};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = (&'static str, bool, String);

pub fn run_all() -> Vec<Outcome> {
    vec![
        simplex_qp_vs_enumeration(),
        surrogate_gradient_consistency(),
        bregman_identity_constancy(),
        complementarity_every_iteration(),
        engine_determinism(),
        checkpoint_replay(),
        rounding_frequencies(),
        save_load_round_trip(),
    ]
}

/// Exact minimizer of `Σ γx² + ηx` over `{x ≥ 0, Σx ≤ 1}` by trying every support
/// with the simplex constraint both slack and tight.
fn enumerate_qp(gamma: &[f64], eta: &[f64]) -> (Vec<f64>, f64) {
    let j = gamma.len();
    let value = |x: &[f64]| x.iter().zip(gamma.iter().zip(eta)).map(|(v, (g, e))| g * v * v + e * v).sum::<f64>();
    let mut best = (vec![0.0; j], 0.0);
    for mask in 1u32..(1 << j) {
        let support: Vec<usize> = (0..j).filter(|k| mask & (1 << k) != 0).collect();
        let free: Vec<f64> = support.iter().map(|&k| -eta[k] / (2.0 * gamma[k])).collect();
        let sum_inv: f64 = support.iter().map(|&k| 1.0 / (2.0 * gamma[k])).sum();
        let pi = (free.iter().sum::<f64>() - 1.0) / sum_inv;
        for tight in [false, true] {
            let p = if tight { pi } else { 0.0 };
            if p < 0.0 {
                continue;
            }
            let mut x = vec![0.0; j];
            for &k in &support {
                x[k] = -(eta[k] + p) / (2.0 * gamma[k]);
            }
            if x.iter().any(|&v| v < 0.0) || x.iter().sum::<f64>() > 1.0 + 1e-12 {
                continue;
            }
            let f = value(&x);
            if f < best.1 {
                best = (x, f);
            }
        }
    }
    best
}

fn simplex_qp_vs_enumeration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let j = rng.gen_range(1..=8);
        let gamma: Vec<f64> = (0..j).map(|_| 10f64.powf(rng.gen_range(-2.0..1.0))).collect();
        let eta: Vec<f64> = (0..j).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (expect, _) = enumerate_qp(&gamma, &eta);
        let got = solve_simplex_qp(&SimplexQpInstance { gamma, eta }).unwrap();
        let err = got.x.iter().zip(&expect).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(err);
    }
    ("simplex QP vs enumeration", worst < 1e-8, format!("1000 instances, max |x - x*| {worst:.1e}"))
}

fn random_state(spec: &ProblemSpec<f64>, seed: u64) -> IterationState<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = IterationState::zeros(spec);
    for row in s.x.chunks_mut(spec.num_owners) {
        row.iter_mut().for_each(|v| *v = rng.gen::<f64>());
        let total = row.iter().sum::<f64>() * (1.0 + rng.gen::<f64>());
        row.iter_mut().for_each(|v| *v /= total);
    }
    s.xi.iter_mut().for_each(|v| *v = rng.gen::<f64>());
    s.lambda.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
    s.mu.iter_mut().for_each(|v| *v = rng.gen::<f64>() - 0.5);
    s
}

/// `Σ_s` over constraint families of `(ρ/2)‖Xᵀw_s − d_s + ν_s/ρ‖²`, built from the
/// raw definitions: inequalities use `d = b − ξ`, `ν = λ`; equalities `d = c`, `ν = μ`.
fn penalty(spec: &ProblemSpec<f64>, st: &IterationState<f64>, x: &[f64]) -> f64 {
    let (ni, nj, rho) = (spec.num_items, spec.num_owners, spec.rho);
    let mut acc = 0.0;
    for s in 0..spec.num_ineq + spec.num_eq {
        for k in 0..nj {
            let lhs: f64 = (0..ni).map(|i| spec.w(i)[s] * x[i * nj + k]).sum();
            let r = if s < spec.num_ineq {
                lhs - (spec.b(s, k) - st.xi[s * nj + k]) + st.lambda[s * nj + k] / rho
            } else {
                let n = s - spec.num_ineq;
                lhs - spec.c(n, k) + st.mu[n * nj + k] / rho
            };
            acc += r * r;
        }
    }
    0.5 * rho * acc
}

fn small(kind: ObjectiveKind, seed: u64) -> ProblemSpec<f64> {
    generate_synthetic(8, 3, 2, 1, kind, seed).unwrap()
}

fn surrogate_gradient_consistency() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
        for seed in 0..5 {
            let spec = small(kind, seed);
            let st = random_state(&spec, seed + 50);
            let combined = combine_constraints(&spec, &st);
            let b = compute_b(&spec, &spec.objective, &st.x, &combined, spec.rho).unwrap();
            let g = spec.objective.g_grad(&spec, &st.x);
            let smooth = |x: &[f64]| spec.objective.f_eval(&spec, x).unwrap() + penalty(&spec, &st, x);
            let h = 1e-5;
            for k in 0..st.x.len() {
                let (mut xp, mut xm) = (st.x.clone(), st.x.clone());
                xp[k] += h;
                xm[k] -= h;
                let fd = (smooth(&xp) - smooth(&xm)) / (2.0 * h);
                worst = worst.max((fd - (b[k] + g[k])).abs() / fd.abs().max(1.0));
            }
        }
    }
    ("surrogate gradient", worst < 1e-4, format!("max relative error {worst:.1e}"))
}

/// `Ω(X) = g − f + β‖X‖² − (ρ/2) Σ_s ‖Xᵀw_s‖²`.
fn omega(spec: &ProblemSpec<f64>, x: &[f64]) -> f64 {
    let (ni, nj) = (spec.num_items, spec.num_owners);
    let mut quad = 0.0;
    for s in 0..spec.num_ineq + spec.num_eq {
        for k in 0..nj {
            let l: f64 = (0..ni).map(|i| spec.w(i)[s] * x[i * nj + k]).sum();
            quad += l * l;
        }
    }
    spec.objective.g_eval(spec, x) - spec.objective.f_eval(spec, x).unwrap() + spec.beta * x.iter().map(|v| v * v).sum::<f64>()
        - 0.5 * spec.rho * quad
}

fn bregman(spec: &ProblemSpec<f64>, x: &[f64], y: &[f64]) -> f64 {
    let h = 1e-6;
    let dot: f64 = (0..y.len())
        .map(|k| {
            let (mut yp, mut ym) = (y.to_vec(), y.to_vec());
            yp[k] += h;
            ym[k] -= h;
            (omega(spec, &yp) - omega(spec, &ym)) / (2.0 * h) * (x[k] - y[k])
        })
        .sum();
    omega(spec, x) - omega(spec, y) - dot
}

fn bregman_identity_constancy() -> Outcome {
    let mut worst = 0.0f64;
    for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
        let spec = small(kind, 9);
        let st = random_state(&spec, 3);
        let combined = combine_constraints(&spec, &st);
        let b = compute_b(&spec, &spec.objective, &st.x, &combined, spec.rho).unwrap();
        let separable = |x: &[f64]| {
            spec.objective.g_eval(&spec, x)
                + b.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
                + spec.beta * x.iter().zip(&st.x).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
        };
        let linearized = |x: &[f64]| spec.objective.f_eval(&spec, x).unwrap() + penalty(&spec, &st, x) + bregman(&spec, x, &st.x);
        let mut diffs = Vec::new();
        let mut scale = 1.0f64;
        for k in 0..20 {
            let x = random_state(&spec, 100 + k).x;
            let (a, l) = (separable(&x), linearized(&x));
            scale = scale.max(a.abs()).max(l.abs());
            diffs.push(a - l);
        }
        let spread = diffs.iter().cloned().fold(f64::MIN, f64::max) - diffs.iter().cloned().fold(f64::MAX, f64::min);
        worst = worst.max(spread / scale);
    }
    ("Bregman identity", worst < 1e-4, format!("max relative spread {worst:.1e}"))
}

fn complementarity_every_iteration() -> Outcome {
    let mut runs = 0;
    let mut violations = 0;
    for kind in [ObjectiveKind::Quadratic, ObjectiveKind::Logarithmic] {
        for seed in 0..3 {
            let mut spec: ProblemSpec<f64> = generate_synthetic(300, 5, 3, 2, kind, seed).unwrap();
            if seed == 2 {
                // Switch off a few inequality entries.
                spec.ineq_bounds[1] = f64::INFINITY;
                spec.ineq_bounds[7] = f64::INFINITY;
            }
            let engine = Engine::new(EngineConfig::with_workers(2), partition(&spec, 6).unwrap()).unwrap();
            let sol = solve(&spec, &SolverConfig::fixed(400), &engine).unwrap();
            violations += sol.complementarity_violations;
            let spec32: ProblemSpec<f32> = spec.cast();
            let sol32 = solve(&spec32, &SolverConfig::fixed(200), &engine).unwrap();
            violations += sol32.complementarity_violations;
            runs += 2;
        }
    }
    ("xi/lambda complementarity", violations == 0, format!("{runs} runs, {violations} violating entries"))
}

fn trace_bits(sol: &assign_core::Solution<f64>) -> Vec<[u64; 4]> {
    sol.trace
        .rows
        .iter()
        .map(|r| [r.objective.to_bits(), r.ineq_mapd.to_bits(), r.eq_mapd.to_bits(), r.dual_residual.to_bits()])
        .collect()
}

fn engine_determinism() -> Outcome {
    let spec: ProblemSpec<f64> = generate_synthetic(400, 6, 3, 2, ObjectiveKind::Quadratic, 4).unwrap();
    let parts = partition(&spec, 8).unwrap();
    let run = |cfg: EngineConfig| {
        let engine = Engine::new(cfg, parts.clone()).unwrap();
        solve(&spec, &SolverConfig::fixed(40), &engine).unwrap()
    };
    let base = run(EngineConfig::with_workers(1));
    let mut same = true;
    let mut failures = 0;
    for (workers, p) in [(2, 0.0), (4, 0.0), (3, 0.1), (4, 0.2)] {
        let cfg = EngineConfig {
            tick: std::time::Duration::from_millis(2),
            failure_probability: p,
            failure_seed: 77,
            ..EngineConfig::with_workers(workers)
        };
        let sol = run(cfg);
        failures += sol.failed_workers;
        same &= trace_bits(&sol) == trace_bits(&base) && sol.x().iter().zip(base.x()).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    (
        "engine determinism",
        same && failures > 0,
        format!("4 configurations bit-identical to 1 worker: {same}; {failures} injected worker failures recovered"),
    )
}

fn checkpoint_replay() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let spec: ProblemSpec<f64> = generate_synthetic(300, 5, 2, 2, ObjectiveKind::Logarithmic, 8).unwrap();
    let engine = Engine::new(EngineConfig::with_workers(2), partition(&spec, 5).unwrap()).unwrap();
    let ckpt = CheckpointConfig { dir: dir.path().to_path_buf(), every: 20 };
    let full = solve(&spec, &SolverConfig { checkpoint: Some(ckpt.clone()), ..SolverConfig::fixed(100) }, &engine).unwrap();
    let mut identical = true;
    for from in [20u64, 60] {
        let resumed = solve(&spec, &SolverConfig { checkpoint: Some(ckpt.clone()), resume_from: Some(from), ..SolverConfig::fixed(100) }, &engine).unwrap();
        let tail: Vec<_> = trace_bits(&full).into_iter().skip(from as usize).collect();
        identical &= trace_bits(&resumed) == tail && resumed.x() == full.x();
    }
    ("checkpoint replay", identical, "resume from 20 and 60 reproduces trace rows and X exactly".to_string())
}

fn rounding_frequencies() -> Outcome {
    let probs = [0.05, 0.3, 0.15, 0.4];
    let n = 50_000usize;
    let x: Vec<f64> = (0..n).flat_map(|_| probs).collect();
    let a = round_solution(&x, probs.len(), 11).unwrap();
    let mut counts = vec![0usize; probs.len() + 1];
    for o in &a.owners {
        counts[o.map_or(probs.len(), |j| j as usize)] += 1;
    }
    let none = 1.0 - probs.iter().sum::<f64>();
    let mut worst = 0.0f64;
    for (c, p) in counts.iter().zip(probs.iter().copied().chain([none])) {
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        worst = worst.max((*c as f64 - n as f64 * p).abs() / sigma);
    }
    ("rounding frequencies", worst < 4.0, format!("max deviation {worst:.2} sigma over {n} items"))
}

fn save_load_round_trip() -> Outcome {
    let mut runner = TestRunner::new(Config { cases: 24, ..Config::default() });
    let strategy = (1usize..40, 1usize..5, 0usize..3, 0usize..3, any::<u64>(), 1usize..6, proptest::collection::vec(any::<bool>(), 12));
    let result = runner.run(&strategy, |(items, owners, m, n, seed, parts, inactive)| {
        let mut spec: ProblemSpec<f64> = generate_synthetic(items, owners, m, n, ObjectiveKind::Logarithmic, seed).unwrap();
        for (k, off) in spec.ineq_bounds.iter_mut().zip(inactive.iter().cycle()) {
            if *off {
                *k = f64::INFINITY;
            }
        }
        let dir = tempfile::tempdir().unwrap();
        save_problem(&spec, dir.path(), parts.min(items)).unwrap();
        let back: ProblemSpec<f64> = load_problem(dir.path()).unwrap();
        prop_assert_eq!(back, spec);
        Ok(())
    });
    ("save/load round trip", result.is_ok(), format!("24 random instances with +inf entries: {}", result.map_or_else(|e| e.to_string(), |_| "equal".into())))
}
