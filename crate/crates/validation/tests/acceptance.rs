//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use aladin_cli::commands::{run_bench, BenchArgs};
use aladin_core::barrier::{barrier_gradient, barrier_hessian_diag, BarrierParams};
use aladin_core::mpc::{assemble_sparse_qp, build_chain_benchmark, riccati_residual, riccati_solve, ChainConfig};
use aladin_core::oracle::{solve_reference, DenseQP};
use aladin_core::random::{random_pair, random_qp, RandomQpSpec};
use aladin_core::realtime::{performance_loss, simulate_closed_loop, simulate_reference, RtConfig, RtController};
use aladin_core::solver::{solve, SolveResult, SolverConfig};
use aladin_core::{project_box, SparseQP};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Largest `‖Ey⁺ − z⁺‖∞ / (1 + ‖z⁺‖∞)` over a run.
fn worst_consensus(res: &SolveResult) -> f64 {
    res.trace
        .iter()
        .filter(|r| !r.consensus_gap.is_nan())
        .map(|r| r.consensus_gap / (1.0 + r.z_norm))
        .fold(0.0, f64::max)
}

fn dimensions() -> Outcome {
    let start = Instant::now();
    let mut out = Vec::new();
    let args = BenchArgs { wagons: 50, horizon: 100, x0: 2.0, emit_problem: None };
    let code = run_bench(&args, &mut out).expect("bench runs");
    let elapsed = start.elapsed();
    let text = String::from_utf8(out).unwrap();
    let field = |name: &str| -> usize {
        text.lines()
            .find_map(|l| l.strip_prefix(&format!("{name} = ")))
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(usize::MAX)
    };
    let (ny, nz, nnz) = (field("n_y"), field("n_z"), field("nonzeros"));
    let pass = code == 0 && ny == 15000 && within(elapsed, Duration::from_secs(1)).is_ok();
    Outcome {
        pass,
        detail: format!("n_y={ny} (15000 expected), n_z={nz} (reference 24900), nonzeros={nnz} (reference 124202), {elapsed:.2?}"),
    }
}

fn riccati() -> Outcome {
    let start = Instant::now();
    let one = DMatrix::from_element(1, 1, 1.0);
    let scalar = riccati_solve(&one, &one, &one, &one, 1e-12).map(|p| p[(0, 0)]);
    let golden = (1.0 + 5f64.sqrt()) / 2.0;
    let scalar_err = scalar.map(|p| (p - golden).abs()).unwrap_or(f64::INFINITY);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let nx = rng.random_range(1..=10);
        let nu = rng.random_range(1..=nx);
        let radius = rng.random_range(0.5..1.5);
        let (a, b) = random_pair(&mut rng, nx, nu, radius);
        let q = DMatrix::identity(nx, nx);
        let r = DMatrix::identity(nu, nu);
        let res = match riccati_solve(&a, &b, &q, &r, 1e-11) {
            Ok(p) => riccati_residual(&a, &b, &q, &r, &p),
            Err(_) => f64::INFINITY,
        };
        worst = worst.max(res);
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-10 && scalar_err <= 1e-10 && within(elapsed, Duration::from_secs(10)).is_ok(),
        detail: format!("max residual {worst:.2e} on 100 pairs, scalar |P - golden| = {scalar_err:.2e}, {elapsed:.2?}"),
    }
}

/// Returns the outcome and the worst relative consensus gap seen.
fn oracle_equivalence() -> (Outcome, f64) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    let mut worst_gap: f64 = 0.0;
    let (mut worst_value, mut worst_y): (f64, f64) = (0.0, 0.0);
    for k in 0..200 {
        let zero_objective = k < 20;
        let ny = rng.random_range(1..=10);
        let nz = rng.random_range(if zero_objective { ny } else { 1 }..=15);
        let qp = random_qp(&mut rng, RandomQpSpec { ny, nz, zero_objective, density: 0.5 }).unwrap();
        let dense = DenseQP::from_sparse(&qp).unwrap();
        let reference = solve_reference(&dense).unwrap();
        for theta in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let cfg = SolverConfig { theta, ..SolverConfig::default() };
            let res = solve(&qp, &cfg, None).unwrap();
            worst_gap = worst_gap.max(worst_consensus(&res));
            let dv = (dense.objective(&res.y) - reference.value).abs();
            // 𝒬 ≻ 0 has a unique minimizer; with 𝒬 = 0 every feasible point is optimal
            let dy = if zero_objective {
                dense.infeasibility(&res.y)
            } else {
                max_abs_diff(&res.y, &reference.y)
            };
            worst_value = worst_value.max(dv);
            worst_y = worst_y.max(dy);
            if dv > 1e-6 || dy > 1e-5 {
                failures.push(format!("#{k} theta={theta} {:?} dv={dv:.1e} dy={dy:.1e}", res.status));
            }
        }
    }
    let elapsed = start.elapsed();
    let timing = within(elapsed, Duration::from_secs(300));
    let outcome = Outcome {
        pass: failures.is_empty() && timing.is_ok(),
        detail: format!(
            "{} of 1000 solves off (worst |dv|={worst_value:.1e}, worst dy={worst_y:.1e}){}{}, {elapsed:.2?}",
            failures.len(),
            if failures.is_empty() { "" } else { ": " },
            failures.join("; ")
        ),
    };
    (outcome, worst_gap)
}

fn barrier_speedup() -> (Outcome, f64) {
    let start = Instant::now();
    let mpc = build_chain_benchmark(&ChainConfig::with_wagons(50), 100, &[2.0; 100]).unwrap();
    let qp = assemble_sparse_qp(&mpc).unwrap();
    let on = solve(&qp, &SolverConfig::default(), None).unwrap();
    let off = solve(&qp, &SolverConfig { barrier_updates: false, ..SolverConfig::default() }, None).unwrap();
    let elapsed = start.elapsed();
    let ratio = off.iterations as f64 / on.iterations as f64;
    let gap = worst_consensus(&on).max(worst_consensus(&off));
    let outcome = Outcome {
        pass: ratio >= 3.0 && within(elapsed, Duration::from_secs(600)).is_ok(),
        detail: format!(
            "updates on: {} iterations ({:?}), off: {} iterations ({:?}), ratio {ratio:.1} (reference 729 vs 6561), {elapsed:.2?}",
            on.iterations, on.status, off.iterations, off.status
        ),
    };
    (outcome, gap)
}

fn realtime_loss() -> Outcome {
    let start = Instant::now();
    let x0 = vec![2.0; 20];
    let mpc = build_chain_benchmark(&ChainConfig::with_wagons(10), 40, &x0).unwrap();
    let base = RtConfig::default();
    let reference = simulate_reference(&mpc, &base, &x0, 1e-10).unwrap();
    let loss_at = |i_max: usize| {
        let trace = simulate_closed_loop(&mpc, &RtConfig { i_max, ..base.clone() }, &x0).unwrap();
        (performance_loss(&trace, &reference).unwrap(), trace.unstable)
    };
    let (l5, u5) = loss_at(5);
    let (l8, _) = loss_at(8);
    let elapsed = start.elapsed();
    Outcome {
        pass: !u5 && l5 < 5e-3 && l8 <= l5 && within(elapsed, Duration::from_secs(600)).is_ok(),
        detail: format!("loss(i_max=5)={l5:.3e} (limit 5e-3), loss(i_max=8)={l8:.3e}, unstable={u5}, {elapsed:.2?}"),
    }
}

fn realtime_consistency() -> Outcome {
    let start = Instant::now();
    let mpc = build_chain_benchmark(&ChainConfig::with_wagons(3), 10, &[0.0; 6]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x0: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mut ctrl = RtController::new(mpc.clone(), RtConfig { i_max: 10_000, ..RtConfig::default() }).unwrap();
        let out = ctrl.step(&x0);
        let mut qp: SparseQP = assemble_sparse_qp(&mpc).unwrap();
        qp.set_initial_state(&x0).unwrap();
        let exact = solve(&qp, &SolverConfig { tol: 1e-10, ..SolverConfig::default() }, None).unwrap();
        let layout = qp.layout().unwrap();
        let err = if out.failed { f64::INFINITY } else { max_abs_diff(&out.u0, &exact.y[layout.u(0)]) };
        worst = worst.max(err);
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-6 && within(elapsed, Duration::from_secs(120)).is_ok(),
        detail: format!("max |u0_rt - u0_exact| = {worst:.2e} over 10 states, {elapsed:.2?}"),
    }
}

fn properties(consensus: f64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    // barrier Hessian against central differences of the gradient
    let mut fd_err: f64 = 0.0;
    for _ in 0..2000 {
        let l = rng.random_range(-3.0..3.0);
        let (lo, hi) = match rng.random_range(0..4) {
            0 => (l, l + rng.random_range(0.0..3.0)),
            1 => (l, f64::INFINITY),
            2 => (f64::NEG_INFINITY, l),
            _ => (l, l),
        };
        let (a, b) = (if lo.is_finite() { lo } else { hi - 2.0 }, if hi.is_finite() { hi } else { lo + 2.0 });
        let z = a + rng.random_range(0.0..=1.0) * (b - a);
        let p = BarrierParams::new(rng.random_range(0.2..2.0), rng.random_range(0.1..10.0)).unwrap();
        let k = barrier_hessian_diag(p, &[z], &[lo], &[hi]).unwrap()[0];
        let h = 1e-6;
        let fd = (barrier_gradient(p, &[z + h], &[lo], &[hi])[0] - barrier_gradient(p, &[z - h], &[lo], &[hi])[0]) / (2.0 * h);
        fd_err = fd_err.max((fd - k).abs() / k);
    }

    // projection: membership and idempotence
    let mut projection_ok = true;
    for _ in 0..2000 {
        let n = rng.random_range(1..8);
        let lower: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { f64::NEG_INFINITY } else { rng.random_range(-2.0..0.0) }).collect();
        let upper: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(0.0..2.0) }).collect();
        let xi: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let p = project_box(&xi, &lower, &upper);
        projection_ok &= p.iter().zip(lower.iter().zip(&upper)).all(|(&v, (&l, &u))| l <= v && v <= u);
        projection_ok &= project_box(&p, &lower, &upper) == p;
    }

    // bitwise determinism of repeated solves
    let mut deterministic = true;
    for k in 0..10 {
        let ny = rng.random_range(1..=10);
        let nz = rng.random_range(ny..=15);
        let qp = random_qp(&mut rng, RandomQpSpec { ny, nz, zero_objective: k < 2, density: 0.5 }).unwrap();
        let a = solve(&qp, &SolverConfig::default(), None).unwrap();
        let b = solve(&qp, &SolverConfig::default(), None).unwrap();
        deterministic &= a.y == b.y && a.lambda == b.lambda && a.z == b.z && a.iterations == b.iterations;
    }
    let mpc = build_chain_benchmark(&ChainConfig::with_wagons(5), 20, &[2.0; 10]).unwrap();
    let t1 = simulate_closed_loop(&mpc, &RtConfig { max_steps: 50, ..RtConfig::default() }, &[2.0; 10]).unwrap();
    let t2 = simulate_closed_loop(&mpc, &RtConfig { max_steps: 50, ..RtConfig::default() }, &[2.0; 10]).unwrap();
    deterministic &= t1 == t2;

    let pass = fd_err <= 1e-5 && projection_ok && consensus <= 1e-9 && deterministic;
    Outcome {
        pass,
        detail: format!(
            "barrier fd rel err {fd_err:.1e}, projection {}, worst consensus gap {consensus:.1e} (scaled), deterministic {deterministic}",
            if projection_ok { "ok" } else { "violated" }
        ),
    }
}

fn main() -> ExitCode {
    let mut all = true;
    let mut report = |n: usize, name: &str, o: Outcome| {
        all &= o.pass;
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "dimensions", dimensions());
    report(2, "riccati", riccati());
    let (c3, gap3) = oracle_equivalence();
    report(3, "oracle equivalence", c3);
    let (c4, gap4) = barrier_speedup();
    report(4, "barrier speedup", c4);
    report(5, "real-time loss", realtime_loss());
    report(6, "real-time consistency", realtime_consistency());
    report(7, "property suites", properties(gap3.max(gap4)));
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
