use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use aladin_core::mpc::{assemble_sparse_qp, build_chain_benchmark, ChainConfig};
use aladin_core::realtime::{performance_loss, simulate_closed_loop, simulate_reference, write_trace_csv, RtConfig};
use aladin_core::solver::{solve, SolveResult, SolverConfig, Status, TraceRecord};
use serde::Serialize;

use crate::problem::{emit_problem, read_problem, Problem};
use crate::{exit, CliError};

/// Tolerance of the exact controller behind `--loss`.
pub const REFERENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SolveArgs {
    pub problem: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
    pub no_barrier_updates: bool,
    pub no_active_set: bool,
    pub theta: f64,
    pub trace: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct BenchArgs {
    pub wagons: usize,
    pub horizon: usize,
    pub x0: f64,
    pub emit_problem: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RealtimeArgs {
    pub problem: PathBuf,
    pub imax: usize,
    pub steps: usize,
    pub gamma0: f64,
    pub trace: Option<PathBuf>,
    pub loss: bool,
}

#[derive(Debug, Serialize)]
struct SolutionFile<'a> {
    y: &'a [f64],
    lambda: &'a [f64],
    status: &'static str,
    iterations: usize,
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

pub fn write_solve_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> std::io::Result<()> {
    writeln!(out, "iter,primal_res,dual_res,k_updated,elapsed_s")?;
    for r in trace {
        writeln!(
            out,
            "{},{:e},{:e},{},{:e}",
            r.iteration,
            r.primal_res,
            r.dual_res,
            u8::from(r.k_updated),
            r.elapsed_s
        )?;
    }
    out.flush()
}

pub fn solution_json(res: &SolveResult) -> Result<String, CliError> {
    let file = SolutionFile {
        y: &res.y,
        lambda: &res.lambda,
        status: res.status.as_str(),
        iterations: res.iterations,
    };
    Ok(serde_json::to_string(&file)?)
}

/// Runs `solve`; returns the result and the exit code it maps to.
pub fn run_solve<W: Write>(args: &SolveArgs, stdout: &mut W) -> Result<(SolveResult, i32), CliError> {
    let qp = read_problem(&args.problem)?.to_qp()?;
    let cfg = SolverConfig {
        tol: args.tol,
        max_iter: args.max_iter,
        theta: args.theta,
        barrier_updates: !args.no_barrier_updates,
        active_set_guess: !args.no_active_set,
        ..SolverConfig::default()
    };
    let res = solve(&qp, &cfg, None)?;
    if let Some(path) = &args.trace {
        write_solve_trace(&res.trace, create(path)?)?;
    }
    let json = solution_json(&res)?;
    match &args.out {
        Some(path) => {
            let mut f = create(path)?;
            writeln!(f, "{json}")?;
            f.flush()?;
        }
        None => writeln!(stdout, "{json}")?,
    }
    let code = if res.status == Status::MaxIter { exit::MAX_ITER } else { exit::OK };
    Ok((res, code))
}

pub fn run_bench<W: Write>(args: &BenchArgs, stdout: &mut W) -> Result<i32, CliError> {
    if args.wagons == 0 || args.horizon == 0 {
        return Err(CliError::Input("wagons and horizon must be positive".into()));
    }
    if !args.x0.is_finite() {
        return Err(CliError::Input("x0 must be finite".into()));
    }
    let x0 = vec![args.x0; 2 * args.wagons];
    let mpc = build_chain_benchmark(&ChainConfig::with_wagons(args.wagons), args.horizon, &x0)?;
    let qp = assemble_sparse_qp(&mpc)?;
    writeln!(stdout, "n_y = {}", qp.ny())?;
    writeln!(stdout, "n_z = {}", qp.nz())?;
    writeln!(stdout, "nnz(Q) = {}", qp.q().nnz())?;
    writeln!(stdout, "nnz(E) = {}", qp.e().nnz())?;
    writeln!(stdout, "nonzeros = {}", qp.data_nonzeros())?;
    if let Some(path) = &args.emit_problem {
        let mut f = create(path)?;
        writeln!(f, "{}", emit_problem(&Problem::Mpc(mpc))?)?;
        f.flush()?;
    }
    Ok(exit::OK)
}

pub fn run_realtime<W: Write>(args: &RealtimeArgs, stdout: &mut W) -> Result<i32, CliError> {
    let mpc = match read_problem(&args.problem)? {
        Problem::Mpc(m) => m,
        Problem::Qp(_) => return Err(CliError::Input("realtime needs an mpc problem".into())),
    };
    let cfg = RtConfig {
        i_max: args.imax,
        max_steps: args.steps,
        gamma0: args.gamma0,
        ..RtConfig::default()
    };
    cfg.validate()?;
    let x0 = mpc.x0.clone();
    let trace = simulate_closed_loop(&mpc, &cfg, &x0)?;
    if let Some(path) = &args.trace {
        let mut f = create(path)?;
        write_trace_csv(&trace, &mut f)?;
        f.flush()?;
    }
    if args.loss {
        let reference = simulate_reference(&mpc, &cfg, &x0, REFERENCE_TOL)?;
        let loss = performance_loss(&trace, &reference)?;
        writeln!(stdout, "imax,{},loss,{:e},unstable,{}", args.imax, loss, u8::from(trace.unstable))?;
    }
    Ok(exit::OK)
}
