//! Real-time controller: a fixed number of iterations per sample, warm
//! started by shifting the previous solution, plus a nominal closed-loop
//! simulator and the relative performance loss against an exact controller.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::barrier;
use crate::error::{check_len, Error, Result};
use crate::mpc::{assemble_sparse_qp, MpcProblem};
use crate::qp::SparseQP;
use crate::solver::{self, IterateState, SolverConfig, Status, WarmStart};
use crate::sparse::norm2;

#[derive(Debug, Clone, PartialEq)]
pub struct RtConfig {
    /// Iterations per sample.
    pub i_max: usize,
    /// Warm starts are scaled so that `‖(y, z, λ)‖₂ ≤ γ₀‖x₀‖_Q`.
    pub gamma0: f64,
    pub max_steps: usize,
    /// The simulation stops once `‖x‖_Q` falls to this value.
    pub stop_threshold: f64,
    /// Instability is flagged once `‖x‖_Q` exceeds this multiple of `‖x₀‖_Q`.
    pub instability_factor: f64,
    pub solver: SolverConfig,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self {
            i_max: 5,
            gamma0: 1e3,
            max_steps: 500,
            stop_threshold: 1e-9,
            instability_factor: 1e3,
            solver: SolverConfig::default(),
        }
    }
}

impl RtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.i_max == 0 {
            return Err(Error::InvalidInput("i_max must be at least 1".into()));
        }
        if !(self.gamma0 > 0.0) {
            return Err(Error::InvalidInput("gamma0 must be positive".into()));
        }
        self.solver.validate()
    }
}

/// Outcome of one controller sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleOutcome {
    pub u0: Vec<f64>,
    pub primal_res: f64,
    pub dual_res: f64,
    /// Numerical failure; `u0` is the zero fallback.
    pub failed: bool,
}

/// Advances every stage block of `(y, λ)` by one stage and scales the result
/// into the ball of radius `γ₀‖x₀‖_Q`.
///
/// The new last control comes from the LQR law applied to the shifted final
/// state, the new final state from the dynamics, and the last row block of `λ`
/// is kept. `z` is set to `E y` rather than shifted: the first row block has
/// bounds that move with `x₀`, and a `z` inconsistent with `y` can make both
/// residuals vanish at a non-solution. Multipliers of rows without decision
/// variables (constraints on `x₀` alone) are reset to zero.
pub fn shift_warm_start(
    ws: &WarmStart,
    qp: &SparseQP,
    mpc: &MpcProblem,
    lqr_gain: &DMatrix<f64>,
    x0: &[f64],
    gamma0: f64,
) -> Result<WarmStart> {
    let layout = qp
        .layout()
        .ok_or_else(|| Error::InvalidInput("QP has no stage layout".into()))?;
    check_len("warm-start y", qp.ny(), ws.y.len())?;
    check_len("warm-start z", qp.nz(), ws.z.len())?;
    check_len("warm-start lambda", qp.nz(), ws.lambda.len())?;
    check_len("initial state", mpc.nx(), x0.len())?;
    let n = layout.horizon;
    let mut y = ws.y.clone();
    let mut lambda = ws.lambda.clone();
    if n > 1 {
        let sv = layout.stage_vars();
        y.copy_within(sv.., 0);
        let sr = layout.stage_rows();
        lambda.copy_within(sr.., 0);
        lambda[(n - 1) * sr..].copy_from_slice(&ws.lambda[(n - 1) * sr..]);
    }
    let x_last = if n > 1 {
        y[layout.x(n - 1)].to_vec()
    } else {
        x0.to_vec()
    };
    let u = lqr_gain * DVector::from_column_slice(&x_last);
    let x_next = mpc.step(&x_last, u.as_slice());
    y[layout.u(n - 1)].copy_from_slice(u.as_slice());
    y[layout.x(n)].copy_from_slice(&x_next);

    let mut used = vec![false; qp.nz()];
    for (r, _, v) in qp.e().triplets() {
        used[r] |= v != 0.0;
    }
    for (l, &u) in lambda.iter_mut().zip(&used) {
        if !u {
            *l = 0.0;
        }
    }
    let mut z = qp.e().spmv(&y, false)?;

    let bound = gamma0 * mpc.q_norm(x0);
    let norm = (norm2(&y).powi(2) + norm2(&z).powi(2) + norm2(&lambda).powi(2)).sqrt();
    if norm > bound {
        let s = if norm > 0.0 { bound / norm } else { 0.0 };
        for v in y.iter_mut().chain(z.iter_mut()).chain(lambda.iter_mut()) {
            *v *= s;
        }
    }
    Ok(WarmStart { y, z, lambda })
}

/// Real-time controller state: the QP, the live iterate and its factorizations.
#[derive(Debug, Clone)]
pub struct RtController {
    mpc: MpcProblem,
    qp: SparseQP,
    cfg: RtConfig,
    state: IterateState,
    lqr_gain: DMatrix<f64>,
    started: bool,
}

impl RtController {
    pub fn new(mpc: MpcProblem, cfg: RtConfig) -> Result<Self> {
        cfg.validate()?;
        let qp = assemble_sparse_qp(&mpc)?;
        let state = solver::init(&qp, &cfg.solver, None)?;
        let lqr_gain = mpc.lqr_gain();
        Ok(Self {
            mpc,
            qp,
            cfg,
            state,
            lqr_gain,
            started: false,
        })
    }

    pub fn qp(&self) -> &SparseQP {
        &self.qp
    }

    pub fn state(&self) -> &IterateState {
        &self.state
    }

    /// One sample: new bounds, shifted warm start, one `K` update and exactly
    /// `i_max` iterations without the Step 9 events.
    pub fn step(&mut self, x0: &[f64]) -> SampleOutcome {
        match self.try_step(x0) {
            Ok(out) => out,
            Err(_) => {
                self.started = false;
                let zeros_y = vec![0.0; self.qp.ny()];
                let zeros_z = vec![0.0; self.qp.nz()];
                self.state.set_primal_dual(&zeros_y, &zeros_z, &zeros_z);
                SampleOutcome {
                    u0: vec![0.0; self.mpc.nu()],
                    primal_res: f64::NAN,
                    dual_res: f64::NAN,
                    failed: true,
                }
            }
        }
    }

    fn try_step(&mut self, x0: &[f64]) -> Result<SampleOutcome> {
        check_len("initial state", self.mpc.nx(), x0.len())?;
        self.qp.set_initial_state(x0)?;
        let layout = self.qp.layout().expect("assembled with a layout");

        let prev = WarmStart {
            y: self.state.y.clone(),
            z: self.state.z.clone(),
            lambda: self.state.lambda.clone(),
        };
        let ws = if self.started {
            shift_warm_start(&prev, &self.qp, &self.mpc, &self.lqr_gain, x0, self.cfg.gamma0)?
        } else {
            prev
        };
        self.started = true;
        self.state.set_primal_dual(&ws.y, &ws.z, &ws.lambda);

        self.state.decoupled_step(&self.qp);
        let params = barrier::step9b_params(self.state.primal_res, self.state.dual_res);
        self.state.update_barrier(&self.qp, params)?;

        for _ in 0..self.cfg.i_max {
            if solver::iterate(&mut self.state, &self.qp, &self.cfg.solver) == solver::Step::Converged {
                break;
            }
        }
        let bad = |v: &[f64]| v.iter().any(|x| !x.is_finite());
        if bad(&self.state.y) || bad(&self.state.lambda) || bad(&self.state.z) {
            return Err(Error::Numerical {
                iteration: self.state.iteration,
                source: Box::new(Error::InvalidInput("non-finite iterate".into())),
            });
        }
        Ok(SampleOutcome {
            u0: self.state.y[layout.u(0)].to_vec(),
            primal_res: self.state.primal_res,
            dual_res: self.state.dual_res,
            failed: false,
        })
    }
}

/// [`RtController::step`] as a free function.
pub fn rt_step(ctrl: &mut RtController, x0: &[f64]) -> SampleOutcome {
    ctrl.step(x0)
}

/// Receding-horizon controller that solves every sample to tolerance `tol`,
/// warm started from the shifted previous solution.
#[derive(Debug, Clone)]
pub struct ExactController {
    mpc: MpcProblem,
    qp: SparseQP,
    cfg: SolverConfig,
    lqr_gain: DMatrix<f64>,
    warm: Option<WarmStart>,
}

impl ExactController {
    pub fn new(mpc: &MpcProblem, tol: f64) -> Result<Self> {
        let qp = assemble_sparse_qp(mpc)?;
        let cfg = SolverConfig { tol, ..SolverConfig::default() };
        cfg.validate()?;
        Ok(Self { mpc: mpc.clone(), qp, cfg, lqr_gain: mpc.lqr_gain(), warm: None })
    }

    pub fn qp(&self) -> &SparseQP {
        &self.qp
    }

    /// Exact `u₀⋆(x₀)` together with the full solution.
    pub fn solve(&mut self, x0: &[f64]) -> Result<solver::SolveResult> {
        self.qp.set_initial_state(x0)?;
        let warm = match self.warm.take() {
            Some(prev) => Some(shift_warm_start(&prev, &self.qp, &self.mpc, &self.lqr_gain, x0, f64::INFINITY)?),
            None => None,
        };
        let res = solver::solve(&self.qp, &self.cfg, warm.as_ref())?;
        if res.status == Status::MaxIter {
            return Err(Error::Numerical {
                iteration: res.iterations,
                source: Box::new(Error::InvalidInput("exact controller hit the iteration cap".into())),
            });
        }
        self.warm = Some(WarmStart { y: res.y.clone(), z: res.z.clone(), lambda: res.lambda.clone() });
        Ok(res)
    }

    pub fn step(&mut self, x0: &[f64]) -> SampleOutcome {
        let layout = self.qp.layout().expect("assembled with a layout").clone();
        match self.solve(x0) {
            Ok(res) => SampleOutcome {
                u0: res.y[layout.u(0)].to_vec(),
                primal_res: res.primal_res,
                dual_res: res.dual_res,
                failed: false,
            },
            Err(_) => SampleOutcome {
                u0: vec![0.0; layout.nu],
                primal_res: f64::NAN,
                dual_res: f64::NAN,
                failed: true,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub stage_cost: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    /// Controller failure at this sample or state beyond the instability bound.
    pub unstable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTrace {
    pub steps: Vec<TraceStep>,
    pub cost: f64,
    pub unstable: bool,
    /// `‖x‖_Q` reached the stop threshold.
    pub settled: bool,
}

/// Nominal closed loop `x⁺ = Ax + B·u(x)`.
pub fn simulate_with(
    mpc: &MpcProblem,
    cfg: &RtConfig,
    x0: &[f64],
    mut controller: impl FnMut(&[f64]) -> SampleOutcome,
) -> ClosedLoopTrace {
    let x0_norm = mpc.q_norm(x0);
    let limit = cfg.instability_factor * x0_norm;
    let mut trace = ClosedLoopTrace { steps: Vec::new(), cost: 0.0, unstable: false, settled: false };
    let mut x = x0.to_vec();
    for step in 0..cfg.max_steps {
        if mpc.q_norm(&x) <= cfg.stop_threshold {
            trace.settled = true;
            break;
        }
        let out = controller(&x);
        let stage_cost = mpc.stage_cost(&x, &out.u0);
        trace.cost += stage_cost;
        let next = mpc.step(&x, &out.u0);
        let diverged = !(mpc.q_norm(&next) <= limit);
        trace.steps.push(TraceStep {
            step,
            x: std::mem::replace(&mut x, next),
            u: out.u0,
            stage_cost,
            primal_res: out.primal_res,
            dual_res: out.dual_res,
            unstable: out.failed || diverged,
        });
        if diverged {
            trace.unstable = true;
            break;
        }
    }
    if !trace.unstable && mpc.q_norm(&x) <= cfg.stop_threshold {
        trace.settled = true;
    }
    trace
}

/// Closed loop under the real-time controller.
pub fn simulate_closed_loop(mpc: &MpcProblem, cfg: &RtConfig, x0: &[f64]) -> Result<ClosedLoopTrace> {
    check_len("initial state", mpc.nx(), x0.len())?;
    let mut ctrl = RtController::new(mpc.clone(), cfg.clone())?;
    Ok(simulate_with(mpc, cfg, x0, |x| ctrl.step(x)))
}

/// Closed loop under the exact controller with tolerance `tol`; the reference
/// for [`performance_loss`].
pub fn simulate_reference(mpc: &MpcProblem, cfg: &RtConfig, x0: &[f64], tol: f64) -> Result<ClosedLoopTrace> {
    check_len("initial state", mpc.nx(), x0.len())?;
    let mut ctrl = ExactController::new(mpc, tol)?;
    Ok(simulate_with(mpc, cfg, x0, |x| ctrl.step(x)))
}

/// `(J − J⋆)/J⋆` from the accumulated costs.
pub fn performance_loss(trace: &ClosedLoopTrace, reference: &ClosedLoopTrace) -> Result<f64> {
    if !(reference.cost > 0.0) {
        return Err(Error::InvalidInput("reference cost must be positive".into()));
    }
    Ok((trace.cost - reference.cost) / reference.cost)
}

/// CSV with header `step,x-norm,u-norm,stage_cost,primal_res,dual_res,unstable_flag`;
/// norms are Euclidean.
pub fn write_trace_csv<W: Write>(trace: &ClosedLoopTrace, mut out: W) -> io::Result<()> {
    writeln!(out, "step,x-norm,u-norm,stage_cost,primal_res,dual_res,unstable_flag")?;
    for s in &trace.steps {
        writeln!(
            out,
            "{},{:e},{:e},{:e},{:e},{:e},{}",
            s.step,
            norm2(&s.x),
            norm2(&s.u),
            s.stage_cost,
            s.primal_res,
            s.dual_res,
            u8::from(s.unstable)
        )?;
    }
    Ok(())
}
