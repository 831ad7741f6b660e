use std::path::PathBuf;
use std::time::{Duration, Instant};

use assign_core::admm::CheckpointConfig;
use assign_core::eval::{evaluate, oracle_solve};
use assign_core::problem::{generate_synthetic, generate_uneven, load_problem, read_manifest, save_problem};
use assign_core::rounding::round_best_of;
use assign_core::subsolver::solve_batch;
use assign_core::{partition, solve, Engine, EngineConfig, ProblemSpec, Scalar, SolverConfig, Tolerances};
use log::info;
use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{BenchCommand, EvalArgs, GenArgs, OracleArgs, Precision, RoundArgs, SolveArgs};
use crate::error::CliError;
use crate::files::{read_assignment, read_solution, write_assignment, write_json, write_sidecar, write_solution};

pub fn gen(args: &GenArgs) -> Result<Value, CliError> {
    let kind = args.objective.into();
    let spec: ProblemSpec<f64> = if args.uneven {
        generate_uneven(args.items, args.owners, args.m, args.n, kind, args.seed)?
    } else {
        generate_synthetic(args.items, args.owners, args.m, args.n, kind, args.seed)?
    };
    std::fs::create_dir_all(&args.out).map_err(|e| CliError::io(&args.out, e))?;
    let manifest = save_problem(&spec, &args.out, args.partitions)?;
    write_sidecar(&args.out.join("manifest.json"), Some(args.seed), args)?;
    Ok(json!({
        "problem": args.out,
        "items": manifest.items,
        "owners": manifest.owners,
        "partitions": manifest.partitions.len(),
        "rho": manifest.rho,
        "beta": manifest.beta,
    }))
}

#[derive(Debug, Serialize)]
struct ResolvedSolve<'a> {
    args: &'a SolveArgs,
    partitions: usize,
    failure_seed: u64,
    max_iters: usize,
    tolerances: Option<[f64; 3]>,
    rho: f64,
    beta: f64,
    solution: PathBuf,
    checkpoint_dir: Option<PathBuf>,
}

pub fn solve_cmd(args: &SolveArgs) -> Result<Value, CliError> {
    match args.precision {
        Precision::F64 => solve_typed::<f64>(args),
        Precision::F32 => solve_typed::<f32>(args),
    }
}

fn solve_typed<T: Scalar>(args: &SolveArgs) -> Result<Value, CliError> {
    let spec: ProblemSpec<T> = load_problem(&args.problem)?;
    let manifest = read_manifest(&args.problem)?;
    if args.workers == 0 {
        return Err(CliError::input("--workers must be at least 1"));
    }
    if !(0.0..=1.0).contains(&args.inject_failure) {
        return Err(CliError::input("--inject-failure must lie in [0, 1]"));
    }
    let num_parts = args.partitions.unwrap_or(manifest.partitions.len()).max(1);
    let parts = partition(&spec, num_parts)?;
    let failure_seed = args.failure_seed.or(spec.seed).unwrap_or(0);
    let engine = Engine::new(
        EngineConfig {
            workers: args.workers,
            tick: Duration::from_millis(args.tick_ms.max(1)),
            failure_probability: args.inject_failure,
            failure_seed,
            ..EngineConfig::default()
        },
        parts,
    )?;

    let defaults = Tolerances::default();
    let (max_iters, tolerances) = match args.iters {
        Some(n) => (n, None),
        None => (
            args.max_iters.unwrap_or(SolverConfig::default().max_iters),
            Some(Tolerances {
                ineq_mapd: args.ineq_tol.unwrap_or(defaults.ineq_mapd),
                eq_mapd: args.eq_tol.unwrap_or(defaults.eq_mapd),
                dual_residual: args.dual_tol.unwrap_or(defaults.dual_residual),
            }),
        ),
    };
    let checkpoint_dir = (args.checkpoint_every > 0 || args.resume_from.is_some())
        .then(|| args.checkpoint_dir.clone().unwrap_or_else(|| args.problem.join("checkpoints")));
    let config = SolverConfig {
        max_iters,
        tolerances,
        rho: args.rho,
        beta: args.beta,
        trace_every: args.trace_every,
        checkpoint: checkpoint_dir.as_ref().map(|d| CheckpointConfig { dir: d.clone(), every: args.checkpoint_every }),
        resume_from: args.resume_from,
        check_surrogate: true,
    };
    let out = args.out.clone().unwrap_or_else(|| args.problem.join("solution.csv"));
    let resolved = ResolvedSolve {
        args,
        partitions: num_parts,
        failure_seed,
        max_iters,
        tolerances: tolerances.map(|t| [t.ineq_mapd, t.eq_mapd, t.dual_residual]),
        rho: args.rho.unwrap_or(spec.rho.as_f64()),
        beta: args.beta.unwrap_or(spec.beta.as_f64()),
        solution: out.clone(),
        checkpoint_dir,
    };
    info!("solve config: {}", serde_json::to_string(&resolved).unwrap_or_default());

    let start = Instant::now();
    let sol = solve(&spec, &config, &engine)?;
    let elapsed = start.elapsed();

    write_solution(&out, sol.x(), spec.num_owners)?;
    write_sidecar(&out, spec.seed, &resolved)?;
    if let Some(trace) = &args.trace {
        sol.trace.save(trace)?;
        write_sidecar(trace, spec.seed, &resolved)?;
    }
    let last = sol.trace.last().copied();
    Ok(json!({
        "solution": out,
        "iterations": sol.state.t,
        "iterations_run": sol.iterations_run,
        "converged": sol.converged,
        "objective": last.map(|r| r.objective),
        "ineq_mapd": last.map(|r| r.ineq_mapd),
        "eq_mapd": last.map(|r| r.eq_mapd),
        "dual_residual": last.map(|r| r.dual_residual),
        "complementarity_violations": sol.complementarity_violations,
        "failed_workers": sol.failed_workers,
        "requeued_partitions": sol.requeued_partitions,
        "wall_s": elapsed.as_secs_f64(),
    }))
}

pub fn round(args: &RoundArgs) -> Result<Value, CliError> {
    let spec: ProblemSpec<f64> = load_problem(&args.problem)?;
    let x = read_solution::<f64>(&args.solution, spec.num_items, spec.num_owners)?;
    let (assignment, mapd) = round_best_of(&spec, &x, args.seed, args.repeats)?;
    write_assignment(&args.out, &assignment)?;
    write_sidecar(&args.out, Some(args.seed), args)?;
    let assigned = assignment.owners.iter().filter(|o| o.is_some()).count();
    Ok(json!({ "assignment": args.out, "assigned": assigned, "ineq_mapd": mapd.ineq, "eq_mapd": mapd.eq }))
}

pub fn eval(args: &EvalArgs) -> Result<Value, CliError> {
    let spec: ProblemSpec<f64> = load_problem(&args.problem)?;
    let x = match (&args.solution, &args.assignment) {
        (Some(path), _) => read_solution::<f64>(path, spec.num_items, spec.num_owners)?,
        (None, Some(path)) => read_assignment(path, spec.num_items, spec.num_owners)?.to_matrix(spec.num_owners),
        (None, None) => return Err(CliError::input("one of --solution or --assignment is required")),
    };
    let reference = if args.oracle { Some(oracle_solve(&spec)?.objective) } else { args.reference };
    let report = evaluate(&spec, &spec.objective, &x, reference)?;
    if let Some(out) = &args.out {
        write_json(out, &report)?;
        write_sidecar(out, spec.seed, args)?;
    }
    Ok(serde_json::to_value(&report).map_err(|e| CliError::input(e.to_string()))?)
}

pub fn oracle(args: &OracleArgs) -> Result<Value, CliError> {
    let spec: ProblemSpec<f64> = load_problem(&args.problem)?;
    let start = Instant::now();
    let sol = oracle_solve(&spec)?;
    if let Some(out) = &args.out {
        write_solution(out, &sol.x, spec.num_owners)?;
        write_sidecar(out, spec.seed, args)?;
    }
    Ok(json!({
        "objective": sol.objective,
        "iterations": sol.iterations,
        "kkt": sol.kkt,
        "kkt_residual": sol.kkt.max(),
        "wall_s": start.elapsed().as_secs_f64(),
    }))
}

pub fn bench(cmd: &BenchCommand) -> Result<Vec<Value>, CliError> {
    match *cmd {
        BenchCommand::Subsolver { j, count, seed } => {
            if j == 0 || count == 0 {
                return Err(CliError::input("--j and --count must be positive"));
            }
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let gamma: Vec<f64> = (0..j * count).map(|_| rng.gen_range(0.5..1.5)).collect();
            let eta: Vec<f64> = (0..j * count).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mut out = vec![0.0; j * count];
            let start = Instant::now();
            solve_batch(&gamma, &eta, j, &mut out)?;
            let secs = start.elapsed().as_secs_f64();
            Ok(vec![json!({ "bench": "subsolver", "j": j, "count": count, "total_ms": secs * 1e3, "ns_per_item": secs * 1e9 / count as f64 })])
        }
        BenchCommand::Iteration { ref items, ref workers, owners, m, n, objective, iters, partitions, seed } => {
            let mut lines = Vec::new();
            for &ni in items {
                let spec: ProblemSpec<f64> = generate_synthetic(ni, owners, m, n, objective.into(), seed)?;
                for &w in workers {
                    let engine = Engine::new(EngineConfig::with_workers(w.max(1)), partition(&spec, partitions)?)?;
                    let cfg = SolverConfig { trace_every: Some(iters.max(1)), check_surrogate: false, ..SolverConfig::fixed(iters) };
                    let sol = solve(&spec, &cfg, &engine)?;
                    let mut ms = sol.iteration_ms.clone();
                    ms.sort_by(f64::total_cmp);
                    let median = ms.get(ms.len() / 2).copied().unwrap_or(f64::NAN);
                    lines.push(json!({
                        "bench": "iteration",
                        "items": ni,
                        "workers": w,
                        "iters": iters,
                        "median_ms": median,
                        "mean_ms": ms.iter().sum::<f64>() / ms.len().max(1) as f64,
                    }));
                }
            }
            Ok(lines)
        }
    }
}
