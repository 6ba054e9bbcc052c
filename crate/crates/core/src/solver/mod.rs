//! ALADIN iterations for the consensus QP `min ½yᵀ𝒬y + G(z)` s.t. `Ey = z`,
//! where `G` is the indicator of the box `[z̲, z̄]`.
//!
//! Each iteration solves the two decoupled augmented-Lagrangian problems (a
//! pre-factorized linear solve in `y` and a box projection in `z`), forms
//! the gradient of `F` and a subgradient of `G` there, and couples them
//! through an equality-constrained consensus QP. At iterations `1, 3, 9, 27, …`
//! the solver tries to finish with an active-set solve and refreshes the
//! scaling `K` from a relaxed log-barrier.

mod active_set;
mod kkt;

use std::time::Instant;

pub use active_set::active_set_guess;
pub use kkt::KktOrdering;

use crate::barrier::{self, BarrierParams};
use crate::error::{check_len, Error, Result};
use crate::ldlt::{LdltFactorization, Ordering};
use crate::qp::SparseQP;
use crate::sparse::norm_inf;

use kkt::{resolve_ordering, ReducedKkt};

/// Default cap on `K`. Rows that are nearly but not exactly active get
/// curvature close to the cap and then move by about `λᵢ/Kᵢᵢ` per iteration,
/// so a cap near `10¹²` effectively freezes them.
pub const DEFAULT_K_MAX: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Regularization of `H = 𝒬 + ε₁·1`.
    pub eps1: f64,
    /// Regularization of `Σ = 𝒬 + ε₂·1`.
    pub eps2: f64,
    /// Dual damping `θ ∈ [0, 1]`.
    pub theta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Refresh `K` at every scheduled event; when off, `K` is refreshed once
    /// (at the first event) and then frozen.
    pub barrier_updates: bool,
    pub active_set_guess: bool,
    /// Upper clamp on the diagonal of `K`, at most [`barrier::K_MAX`].
    pub k_max: f64,
    pub ordering: KktOrdering,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            eps1: 1e-6,
            eps2: 1e-3,
            theta: 0.75,
            tol: 1e-8,
            max_iter: 100_000,
            barrier_updates: true,
            active_set_guess: true,
            k_max: DEFAULT_K_MAX,
            ordering: KktOrdering::Auto,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 > 0.0) || !(self.eps2 > 0.0) {
            return Err(Error::InvalidInput("regularizations must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(Error::InvalidInput("theta must lie in [0, 1]".into()));
        }
        if !(barrier::K_MIN..=barrier::K_MAX).contains(&self.k_max) {
            return Err(Error::InvalidInput(format!(
                "k_max must lie in [{:e}, {:e}]",
                barrier::K_MIN,
                barrier::K_MAX
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidInput("tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Both residuals reached the tolerance.
    Converged,
    /// A guessed active set produced a verified optimal solution.
    ActiveSetSolved,
    MaxIter,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Converged => "Converged",
            Status::ActiveSetSolved => "ActiveSetSolved",
            Status::MaxIter => "MaxIter",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub k_updated: bool,
    pub elapsed_s: f64,
    /// `‖Ey⁺ − z⁺‖∞` after the consensus step (NaN if the step was skipped).
    pub consensus_gap: f64,
    /// `‖z⁺‖∞`, the scale of the consensus gap.
    pub z_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub y: Vec<f64>,
    pub lambda: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub status: Status,
    pub iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub trace: Vec<TraceRecord>,
}

/// Warm start `(y, z, λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Outcome of a single iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    /// Residuals at or below tolerance; the consensus step was skipped.
    Converged,
    Continue,
}

/// Live iterate together with its cached factorizations.
#[derive(Debug, Clone)]
pub struct IterateState {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub k: Vec<f64>,
    pub lambda: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Diagonal of `K`.
    pub kdiag: Vec<f64>,
    pub primal_res: f64,
    pub dual_res: f64,
    pub iteration: usize,
    /// `−1`/`+1` where the last projection clamped to the lower/upper bound.
    clamped: Vec<i8>,
    eps1: f64,
    eps2: f64,
    k_max: f64,
    /// `𝒬 + Σ = 2𝒬 + ε₂·1`.
    decoupled: LdltFactorization,
    kkt: ReducedKkt,
    qy: Vec<f64>,
    scratch_y: Vec<f64>,
    scratch_y2: Vec<f64>,
    scratch_z: Vec<f64>,
    solve_work: Vec<f64>,
}

/// Componentwise clamp onto `[lower, upper]`.
pub fn project_box(xi: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    xi.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&x, (&l, &u))| x.max(l).min(u))
        .collect()
}

/// `true` for `i ∈ {1, 3, 9, 27, …}`.
pub fn is_power_of_three(mut i: usize) -> bool {
    if i == 0 {
        return false;
    }
    while i % 3 == 0 {
        i /= 3;
    }
    i == 1
}

/// Initializes the iterate: `y = z = λ = 0` (or the warm start), `K = 1`,
/// and factorizes `𝒬 + Σ` and the reduced KKT matrix.
pub fn init(qp: &SparseQP, cfg: &SolverConfig, warm: Option<&WarmStart>) -> Result<IterateState> {
    IterateState::new(qp, cfg, warm)
}

impl IterateState {
    pub fn new(qp: &SparseQP, cfg: &SolverConfig, warm: Option<&WarmStart>) -> Result<Self> {
        cfg.validate()?;
        let (ny, nz) = (qp.ny(), qp.nz());
        let (y, z, lambda) = match warm {
            Some(ws) => {
                check_len("warm-start y", ny, ws.y.len())?;
                check_len("warm-start z", nz, ws.z.len())?;
                check_len("warm-start lambda", nz, ws.lambda.len())?;
                (ws.y.clone(), ws.z.clone(), ws.lambda.clone())
            }
            None => (vec![0.0; ny], vec![0.0; nz], vec![0.0; nz]),
        };
        let q_plus_sigma = qp.q().scale(2.0).add_diagonal(cfg.eps2);
        let decoupled = LdltFactorization::new(&q_plus_sigma.lower_triangle(), Ordering::Amd)?;
        let h = qp.q().add_diagonal(cfg.eps1);
        let kdiag = vec![1.0; nz];
        let ordering = resolve_ordering(cfg.ordering, qp.layout(), ny, nz);
        let kkt = ReducedKkt::new(&h, qp.e(), &kdiag, ordering)?;
        Ok(Self {
            y,
            v: vec![0.0; ny],
            h: vec![0.0; ny],
            z,
            w: vec![0.0; nz],
            k: vec![0.0; nz],
            lambda,
            sigma: vec![0.0; ny],
            kdiag,
            primal_res: f64::INFINITY,
            dual_res: f64::INFINITY,
            iteration: 0,
            clamped: vec![0; nz],
            eps1: cfg.eps1,
            eps2: cfg.eps2,
            k_max: cfg.k_max,
            decoupled,
            kkt,
            qy: vec![0.0; ny],
            scratch_y: vec![0.0; ny],
            scratch_y2: vec![0.0; ny],
            scratch_z: vec![0.0; nz],
            solve_work: vec![0.0; ny],
        })
    }

    /// Replaces `(y, z, λ)` keeping `K` and all factorizations.
    pub fn set_primal_dual(&mut self, y: &[f64], z: &[f64], lambda: &[f64]) {
        self.y.copy_from_slice(y);
        self.z.copy_from_slice(z);
        self.lambda.copy_from_slice(lambda);
    }

    /// `(‖w − z‖∞, ‖𝒬y + σ‖∞)` as of the last decoupled step.
    pub fn residuals(&self) -> (f64, f64) {
        (self.primal_res, self.dual_res)
    }

    pub(crate) fn clamped(&self) -> &[i8] {
        &self.clamped
    }

    /// Nonzeros in the factor of the reduced KKT matrix.
    pub fn kkt_factor_nnz(&self) -> usize {
        self.kkt.factor().nnz_l()
    }

    /// `‖Ey − z‖∞` for the current iterate.
    pub fn consensus_gap(&self, qp: &SparseQP) -> f64 {
        let ey = qp.e().spmv(&self.y, false).expect("dimensions fixed at init");
        ey.iter()
            .zip(&self.z)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Steps 1–4: `σ = Eᵀλ`, the decoupled minimizers `v` and `w`, and the
    /// residuals.
    pub fn decoupled_step(&mut self, qp: &SparseQP) {
        qp.e().mul_t_vec_into(&self.lambda, &mut self.sigma);
        qp.q().mul_vec_into(&self.y, &mut self.qy);
        // v = (𝒬 + Σ)⁻¹(Σy − σ), Σy = 𝒬y + ε₂y
        for i in 0..self.y.len() {
            self.v[i] = self.qy[i] + self.eps2 * self.y[i] - self.sigma[i];
        }
        self.decoupled.solve_in_place(&mut self.v, &mut self.solve_work);

        let (lower, upper) = (qp.lower(), qp.upper());
        let mut primal: f64 = 0.0;
        for i in 0..self.z.len() {
            let xi = self.z[i] + self.lambda[i] / self.kdiag[i];
            let (wi, c) = if xi < lower[i] {
                (lower[i], -1)
            } else if xi > upper[i] {
                (upper[i], 1)
            } else {
                (xi, 0)
            };
            self.w[i] = wi;
            self.clamped[i] = c;
            primal = primal.max((wi - self.z[i]).abs());
        }
        let mut dual: f64 = 0.0;
        for i in 0..self.y.len() {
            dual = dual.max((self.qy[i] + self.sigma[i]).abs());
        }
        self.primal_res = primal;
        self.dual_res = dual;
    }

    /// Steps 5–8: gradients, consensus QP and the damped dual update.
    pub fn consensus_step(&mut self, qp: &SparseQP, theta: f64) {
        let ny = self.y.len();
        // h = Σ(y − v) − σ
        for i in 0..ny {
            self.scratch_y[i] = self.y[i] - self.v[i];
        }
        qp.q().mul_vec_into(&self.scratch_y, &mut self.scratch_y2);
        for i in 0..ny {
            self.h[i] = self.scratch_y2[i] + self.eps2 * self.scratch_y[i] - self.sigma[i];
        }
        // k = K(z − w) + λ
        for i in 0..self.z.len() {
            self.k[i] = self.kdiag[i] * (self.z[i] - self.w[i]) + self.lambda[i];
        }
        // top = Hv − h
        qp.q().mul_vec_into(&self.v, &mut self.scratch_y2);
        for i in 0..ny {
            self.scratch_y[i] = self.scratch_y2[i] + self.eps1 * self.v[i] - self.h[i];
        }
        let lambda_plus = &mut self.scratch_z;
        self.kkt.solve(
            &self.scratch_y,
            &self.w,
            &self.k,
            &mut self.y,
            &mut self.z,
            lambda_plus,
        );
        for i in 0..self.lambda.len() {
            self.lambda[i] = theta * lambda_plus[i] + (1.0 - theta) * self.k[i];
        }
    }

    /// Recomputes `K` from the relaxed barrier at the current `z` and
    /// refactorizes the reduced KKT matrix.
    pub fn update_barrier(&mut self, qp: &SparseQP, params: BarrierParams) -> Result<()> {
        barrier::barrier_hessian_diag_into(
            params,
            &self.z,
            qp.lower(),
            qp.upper(),
            self.k_max,
            &mut self.kdiag,
        )?;
        self.kkt.update_k(&self.kdiag)
    }

    /// Barrier parameters from `‖w − z‖∞` at the current `z` and `‖𝒬y + σ‖∞`.
    pub fn barrier_params(&mut self, qp: &SparseQP) -> BarrierParams {
        qp.q().mul_vec_into(&self.y, &mut self.qy);
        let dual = self
            .qy
            .iter()
            .zip(&self.sigma)
            .fold(0.0f64, |m, (a, b)| m.max((a + b).abs()));
        let primal = self
            .w
            .iter()
            .zip(&self.z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        barrier::step9b_params(primal, dual)
    }

    /// Sets `K` directly (clamped to `[K_MIN, k_max]`) and refactorizes.
    pub fn set_kdiag(&mut self, kdiag: &[f64]) -> Result<()> {
        check_len("K diagonal", self.kdiag.len(), kdiag.len())?;
        for (d, &s) in self.kdiag.iter_mut().zip(kdiag) {
            *d = s.clamp(barrier::K_MIN, self.k_max);
        }
        self.kkt.update_k(&self.kdiag)
    }
}

/// One pass of steps 1–8. Returns [`Step::Converged`] without touching
/// `(y, z, λ)` when both residuals are within `cfg.tol`.
pub fn iterate(state: &mut IterateState, qp: &SparseQP, cfg: &SolverConfig) -> Step {
    state.decoupled_step(qp);
    if state.primal_res <= cfg.tol && state.dual_res <= cfg.tol {
        return Step::Converged;
    }
    state.consensus_step(qp, cfg.theta);
    state.iteration += 1;
    Step::Continue
}

/// `(‖w − z‖∞, ‖𝒬y + σ‖∞)`.
pub fn residuals(state: &IterateState) -> (f64, f64) {
    state.residuals()
}

/// Runs the full solver.
pub fn solve(qp: &SparseQP, cfg: &SolverConfig, warm: Option<&WarmStart>) -> Result<SolveResult> {
    let start = Instant::now();
    let mut state = IterateState::new(qp, cfg, warm)?;
    let mut trace = Vec::new();
    let mut barrier_refreshed = false;

    for i in 1..=cfg.max_iter {
        let step = iterate(&mut state, qp, cfg);
        if step == Step::Converged {
            trace.push(TraceRecord {
                iteration: i,
                primal_res: state.primal_res,
                dual_res: state.dual_res,
                k_updated: false,
                elapsed_s: start.elapsed().as_secs_f64(),
                consensus_gap: f64::NAN,
                z_norm: norm_inf(&state.z),
            });
            return Ok(finish(state, Status::Converged, i, trace));
        }
        let consensus_gap = state.consensus_gap(qp);
        let z_norm = norm_inf(&state.z);

        let mut k_updated = false;
        if is_power_of_three(i) {
            if cfg.active_set_guess {
                if let Some((y, lambda)) = active_set_guess(&state, qp, cfg) {
                    trace.push(TraceRecord {
                        iteration: i,
                        primal_res: state.primal_res,
                        dual_res: state.dual_res,
                        k_updated: false,
                        elapsed_s: start.elapsed().as_secs_f64(),
                        consensus_gap,
                        z_norm,
                    });
                    let z = qp.e().spmv(&y, false)?;
                    state.w = project_box(&z, qp.lower(), qp.upper());
                    state.y = y;
                    state.lambda = lambda;
                    state.z = z;
                    state.primal_res = norm_inf(
                        &state.w.iter().zip(&state.z).map(|(a, b)| a - b).collect::<Vec<_>>(),
                    );
                    state.dual_res = stationarity(qp, &state.y, &state.lambda);
                    return Ok(finish(state, Status::ActiveSetSolved, i, trace));
                }
            }
            if cfg.barrier_updates || !barrier_refreshed {
                let params = state.barrier_params(qp);
                state.update_barrier(qp, params).map_err(|e| Error::Numerical {
                    iteration: i,
                    source: Box::new(e),
                })?;
                barrier_refreshed = true;
                k_updated = true;
            }
        }
        trace.push(TraceRecord {
            iteration: i,
            primal_res: state.primal_res,
            dual_res: state.dual_res,
            k_updated,
            elapsed_s: start.elapsed().as_secs_f64(),
            consensus_gap,
            z_norm,
        });
    }
    let iterations = cfg.max_iter;
    Ok(finish(state, Status::MaxIter, iterations, trace))
}

/// `‖𝒬y + Eᵀλ‖∞`.
pub fn stationarity(qp: &SparseQP, y: &[f64], lambda: &[f64]) -> f64 {
    let mut qy = vec![0.0; qp.ny()];
    qp.q().mul_vec_into(y, &mut qy);
    let mut etl = vec![0.0; qp.ny()];
    qp.e().mul_t_vec_into(lambda, &mut etl);
    qy.iter().zip(&etl).fold(0.0, |m, (a, b)| m.max((a + b).abs()))
}

fn finish(state: IterateState, status: Status, iterations: usize, trace: Vec<TraceRecord>) -> SolveResult {
    SolveResult {
        y: state.y,
        lambda: state.lambda,
        z: state.z,
        w: state.w,
        status,
        iterations,
        primal_res: state.primal_res,
        dual_res: state.dual_res,
        trace,
    }
}
