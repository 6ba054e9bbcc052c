//! Sparse convex QP solver built on ALADIN iterations with barrier-based
//! scaling, plus an MPC front end and a real-time controller.

pub mod barrier;
pub mod error;
pub mod ldlt;
pub mod mpc;
pub mod oracle;
pub mod qp;
pub mod random;
pub mod realtime;
pub mod solver;
pub mod sparse;

pub use barrier::{barrier_hessian_diag, step9b_params, BarrierParams};
pub use error::{Error, Result};
pub use ldlt::{ldlt_factor, ldlt_solve, LdltFactorization, Ordering};
pub use mpc::{
    assemble_sparse_qp, build_chain_benchmark, riccati_solve, ChainConfig, MpcProblem,
};
pub use oracle::{solve_reference, DenseQP, ReferenceSolution};
pub use qp::{update_initial_state, SparseQP, StageLayout};
pub use realtime::{
    performance_loss, rt_step, shift_warm_start, simulate_closed_loop, simulate_reference,
    ClosedLoopTrace, ExactController, RtConfig, RtController, SampleOutcome,
};
pub use solver::{
    init, iterate, project_box, residuals, solve, IterateState, KktOrdering, SolveResult,
    SolverConfig, Status, Step, TraceRecord, WarmStart,
};
pub use sparse::SparseMatrix;
