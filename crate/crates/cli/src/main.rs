use std::path::PathBuf;
use std::process::ExitCode;

use aladin_cli::commands::{run_bench, run_realtime, run_solve, BenchArgs, RealtimeArgs, SolveArgs};
use aladin_cli::exit;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aladin", version, about = "Sparse QP solver and real-time MPC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a QP or MPC problem file.
    Solve {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iter: usize,
        #[arg(long)]
        no_barrier_updates: bool,
        #[arg(long)]
        no_active_set: bool,
        #[arg(long, default_value_t = 0.75)]
        theta: f64,
        /// Per-iteration residual trace (CSV).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Solution JSON; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate the chained spring-mass-damper benchmark.
    Bench {
        #[arg(long, default_value_t = 50)]
        wagons: usize,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        /// Initial state, replicated to every component.
        #[arg(long, default_value_t = 2.0, allow_negative_numbers = true)]
        x0: f64,
        #[arg(long)]
        emit_problem: Option<PathBuf>,
    },
    /// Closed-loop simulation with a fixed iteration budget per sample.
    Realtime {
        #[arg(long)]
        problem: PathBuf,
        #[arg(long, default_value_t = 5)]
        imax: usize,
        #[arg(long, default_value_t = 500)]
        steps: usize,
        #[arg(long, default_value_t = 1000.0)]
        gamma0: f64,
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Also run the exact controller and print the relative loss.
        #[arg(long)]
        loss: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    let result = match cli.command {
        Command::Solve { problem, tol, max_iter, no_barrier_updates, no_active_set, theta, trace, out } => {
            let args = SolveArgs { problem, tol, max_iter, no_barrier_updates, no_active_set, theta, trace, out };
            run_solve(&args, &mut stdout).map(|(_, code)| code)
        }
        Command::Bench { wagons, horizon, x0, emit_problem } => {
            run_bench(&BenchArgs { wagons, horizon, x0, emit_problem }, &mut stdout)
        }
        Command::Realtime { problem, imax, steps, gamma0, trace, loss } => {
            run_realtime(&RealtimeArgs { problem, imax, steps, gamma0, trace, loss }, &mut stdout)
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::INPUT_ERROR as u8)
        }
    }
}
