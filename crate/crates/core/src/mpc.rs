//! Linear-quadratic MPC problems, Riccati terminal weights, the chained
//! spring-mass-damper benchmark and sparse QP assembly.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::qp::{SparseQP, StageLayout};
use crate::sparse::SparseMatrix;

/// Iteration cap of [`riccati_solve`].
pub const RICCATI_MAX_ITER: usize = 100_000;

/// `min Σ ‖x_k‖²_Q + ‖u_k‖²_R + ‖x_N‖²_P` subject to `x_{k+1} = A x_k + B u_k`
/// and `c ≤ C x_k + D u_k ≤ d` for `k < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcProblem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// State part of the constraints (`C`).
    pub c_state: DMatrix<f64>,
    /// Input part of the constraints (`D`).
    pub d_input: DMatrix<f64>,
    /// Constraint lower bound `c`.
    pub lower: Vec<f64>,
    /// Constraint upper bound `d`.
    pub upper: Vec<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub horizon: usize,
    pub x0: Vec<f64>,
}

impl MpcProblem {
    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn nc(&self) -> usize {
        self.c_state.nrows()
    }

    /// Checks dimensions, symmetric positive definite weights, `c < d` and `N ≥ 1`.
    pub fn validate(&self) -> Result<()> {
        let (nx, nu, nc) = (self.nx(), self.nu(), self.nc());
        check_len("A columns", nx, self.a.ncols())?;
        check_len("B rows", nx, self.b.nrows())?;
        check_len("C columns", nx, self.c_state.ncols())?;
        check_len("D rows", nc, self.d_input.nrows())?;
        check_len("D columns", nu, self.d_input.ncols())?;
        check_len("c", nc, self.lower.len())?;
        check_len("d", nc, self.upper.len())?;
        check_len("x0", nx, self.x0.len())?;
        for (name, m, n) in [("Q", &self.q, nx), ("R", &self.r, nu), ("P", &self.p, nx)] {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::InvalidInput(format!("{name} must be {n}x{n}")));
            }
            if m != &m.transpose() {
                return Err(Error::InvalidInput(format!("{name} must be symmetric")));
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::InvalidInput(format!("{name} must be positive definite")));
            }
        }
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let all = [&self.a, &self.b, &self.c_state, &self.d_input];
        if all.iter().any(|m| m.iter().any(|v| !v.is_finite())) || self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("problem data must be finite".into()));
        }
        for (i, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l < u) {
                return Err(Error::InvalidInput(format!("need c < d on constraint {i}")));
            }
        }
        Ok(())
    }

    /// `c < 0 < d` componentwise.
    pub fn is_strictly_feasible(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(&l, &u)| l < 0.0 && 0.0 < u)
    }

    /// `‖x‖_Q`.
    pub fn q_norm(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        x.dot(&(&self.q * &x)).max(0.0).sqrt()
    }

    /// `‖x‖²_Q + ‖u‖²_R`.
    pub fn stage_cost(&self, x: &[f64], u: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let u = DVector::from_column_slice(u);
        x.dot(&(&self.q * &x)) + u.dot(&(&self.r * &u))
    }

    /// Discrete LQR gain `F` with `u = F x = −(R + BᵀPB)⁻¹BᵀPA x`.
    pub fn lqr_gain(&self) -> DMatrix<f64> {
        lqr_gain(&self.a, &self.b, &self.r, &self.p)
    }

    /// `A x + B u`.
    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let next = &self.a * DVector::from_column_slice(x) + &self.b * DVector::from_column_slice(u);
        next.as_slice().to_vec()
    }

    /// Full objective of the MPC problem for a stacked `y = [u₀, x₁, …, x_N]`.
    pub fn trajectory_cost(&self, y: &[f64]) -> f64 {
        let (nx, nu) = (self.nx(), self.nu());
        let w = nx + nu;
        let mut cost = 0.0;
        let mut x = self.x0.clone();
        for k in 0..self.horizon {
            let u = &y[k * w..k * w + nu];
            cost += self.stage_cost(&x, u);
            x = y[k * w + nu..(k + 1) * w].to_vec();
        }
        let xn = DVector::from_column_slice(&x);
        cost + xn.dot(&(&self.p * &xn))
    }
}

fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let btp = b.transpose() * p;
    let s = r + &btp * b;
    let rhs = &btp * a;
    let chol = s.cholesky().expect("R + BᵀPB is positive definite");
    -chol.solve(&rhs)
}

fn riccati_map(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let pa = p * a;
    let pb = p * b;
    let s = r + b.transpose() * &pb;
    let g = s.cholesky()?.solve(&(pb.transpose() * a));
    let next = a.transpose() * &pa + q - (a.transpose() * &pb) * g;
    Some((&next + next.transpose()) * 0.5)
}

fn max_row_sum(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Residual `‖P − (AᵀPA + Q − AᵀPB(R+BᵀPB)⁻¹BᵀPA)‖∞` (max row sum).
pub fn riccati_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    match riccati_map(a, b, q, r, p) {
        Some(next) => max_row_sum(&(p - next)),
        None => f64::INFINITY,
    }
}

/// Solves the discrete algebraic Riccati equation by fixed-point iteration
/// from `P⁰ = Q`, stopping once the residual is at most `tol`.
pub fn riccati_solve(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) || b.nrows() != n || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::InvalidInput("inconsistent Riccati dimensions".into()));
    }
    let mut p = q.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..RICCATI_MAX_ITER {
        let next = riccati_map(a, b, q, r, &p).ok_or_else(|| {
            Error::InvalidInput("R + BᵀPB lost positive definiteness".into())
        })?;
        let step = max_row_sum(&(&next - &p));
        p = next;
        if !step.is_finite() {
            break;
        }
        // the step bounds the residual of the previous iterate; confirm on the new one
        if step <= tol {
            residual = riccati_residual(a, b, q, r, &p);
            if residual <= tol {
                return Ok(p);
            }
        }
    }
    Err(Error::RiccatiDivergence {
        iterations: RICCATI_MAX_ITER,
        residual,
    })
}

/// Parameters of the chained spring-mass-damper benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub wagons: usize,
    pub spring: f64,
    pub damper: f64,
    pub mass: f64,
    /// Euler step.
    pub h: f64,
    pub position_bound: f64,
    pub input_bound: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            wagons: 50,
            spring: 1.0,
            damper: 1.0,
            mass: 1.0,
            h: 0.1,
            position_bound: 5.0,
            input_bound: 1.0,
        }
    }
}

impl ChainConfig {
    pub fn with_wagons(wagons: usize) -> Self {
        Self {
            wagons,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.wagons == 0 {
            return Err(Error::InvalidInput("need at least one wagon".into()));
        }
        let positive = [self.h, self.mass, self.position_bound, self.input_bound];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "step, mass and bounds must be positive".into(),
            ));
        }
        if !self.spring.is_finite() || !self.damper.is_finite() {
            return Err(Error::InvalidInput("spring and damper must be finite".into()));
        }
        Ok(())
    }

    /// Euler-discretized dynamics for the state `x = (p₁…p_n, v₁…v_n)`;
    /// the first wagon is attached to a wall (`p₀ = 0`) and the last is free
    /// (`p_{n+1} = p_n`).
    pub fn dynamics(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.wagons;
        let h = self.h;
        let ks = self.spring / self.mass;
        let kd = self.damper / self.mass;
        let mut a = DMatrix::zeros(2 * n, 2 * n);
        let mut b = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            a[(i, n + i)] = h;

            let row = n + i;
            let centre = if i + 1 == n { -1.0 } else { -2.0 };
            a[(row, i)] = h * ks * centre;
            if i > 0 {
                a[(row, i - 1)] = h * ks;
            }
            if i + 1 < n {
                a[(row, i + 1)] = h * ks;
            }
            a[(row, row)] = 1.0 - h * kd;
            b[(row, i)] = h / self.mass;
        }
        (a, b)
    }
}

/// Builds the chain MPC problem with `Q = R = 1`, position and input boxes,
/// and the Riccati terminal weight.
pub fn build_chain_benchmark(cfg: &ChainConfig, horizon: usize, x0: &[f64]) -> Result<MpcProblem> {
    cfg.validate()?;
    let n = cfg.wagons;
    check_len("initial state", 2 * n, x0.len())?;
    let (a, b) = cfg.dynamics();
    let mut c_state = DMatrix::zeros(2 * n, 2 * n);
    let mut d_input = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        c_state[(i, i)] = 1.0;
        d_input[(n + i, i)] = 1.0;
    }
    let upper: Vec<f64> = (0..2 * n)
        .map(|i| if i < n { cfg.position_bound } else { cfg.input_bound })
        .collect();
    let lower = upper.iter().map(|v| -v).collect();
    let q = DMatrix::identity(2 * n, 2 * n);
    let r = DMatrix::identity(n, n);
    let p = riccati_solve(&a, &b, &q, &r, 1e-10)?;
    let problem = MpcProblem {
        a,
        b,
        c_state,
        d_input,
        lower,
        upper,
        q,
        r,
        p,
        horizon,
        x0: x0.to_vec(),
    };
    problem.validate()?;
    Ok(problem)
}

fn push_block(t: &mut Vec<(usize, usize, f64)>, m: &DMatrix<f64>, row0: usize, col0: usize, scale: f64) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let v = m[(i, j)];
            if v != 0.0 {
                t.push((row0 + i, col0 + j, scale * v));
            }
        }
    }
}

/// Assembles the consensus-form QP over `y = [u₀, x₁, …, u_{N−1}, x_N]`.
///
/// `𝒬 = 2·blockdiag(R, Q, …, R, P)` so that `½ yᵀ𝒬y` equals the MPC
/// objective minus the constant `‖x₀‖²_Q`.
pub fn assemble_sparse_qp(p: &MpcProblem) -> Result<SparseQP> {
    p.validate()?;
    let (nx, nu, nc) = (p.nx(), p.nu(), p.nc());
    let mut x0_map_dense = DMatrix::zeros(nx + nc, nx);
    x0_map_dense.rows_mut(0, nx).copy_from(&p.a);
    x0_map_dense.rows_mut(nx, nc).copy_from(&p.c_state);
    let mut x0_lower = vec![0.0; nx];
    x0_lower.extend_from_slice(&p.lower);
    let mut x0_upper = vec![0.0; nx];
    x0_upper.extend_from_slice(&p.upper);
    let layout = StageLayout {
        horizon: p.horizon,
        nx,
        nu,
        nc,
        x0_map: SparseMatrix::from_dense(&x0_map_dense),
        x0_lower,
        x0_upper,
    };
    let (ny, nz) = (layout.ny(), layout.nz());

    let mut qt = Vec::new();
    for k in 0..p.horizon {
        push_block(&mut qt, &p.r, layout.u(k).start, layout.u(k).start, 2.0);
        let w = if k + 1 == p.horizon { &p.p } else { &p.q };
        push_block(&mut qt, w, layout.x(k + 1).start, layout.x(k + 1).start, 2.0);
    }
    let q = SparseMatrix::from_triplets(ny, ny, &qt)?;

    let minus_eye = -DMatrix::<f64>::identity(nx, nx);
    let mut et = Vec::new();
    for k in 0..p.horizon {
        let dyn_row = layout.dynamics_rows(k).start;
        let ineq_row = layout.inequality_rows(k).start;
        let u = layout.u(k).start;
        if k > 0 {
            let x = layout.x(k).start;
            push_block(&mut et, &p.a, dyn_row, x, 1.0);
            push_block(&mut et, &p.c_state, ineq_row, x, 1.0);
        }
        push_block(&mut et, &p.b, dyn_row, u, 1.0);
        push_block(&mut et, &minus_eye, dyn_row, layout.x(k + 1).start, 1.0);
        push_block(&mut et, &p.d_input, ineq_row, u, 1.0);
    }
    let e = SparseMatrix::from_triplets(nz, ny, &et)?;

    let mut lower = vec![0.0; nz];
    let mut upper = vec![0.0; nz];
    for k in 1..p.horizon {
        for (j, i) in layout.inequality_rows(k).enumerate() {
            lower[i] = p.lower[j];
            upper[i] = p.upper[j];
        }
    }
    let mut qp = SparseQP::new(q, e, lower, upper)?.with_layout(layout)?;
    qp.set_initial_state(&p.x0)?;
    Ok(qp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    #[test]
    fn riccati_zero_dynamics_gives_q() {
        let p = riccati_solve(&scalar(0.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-12).unwrap();
        assert_eq!(p[(0, 0)], 1.0);

        let q = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let b = DMatrix::from_row_slice(2, 1, &[0.3, -1.2]);
        let p = riccati_solve(&DMatrix::zeros(2, 2), &b, &q, &scalar(1.0), 1e-12).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn riccati_scalar_golden_ratio() {
        let p = riccati_solve(&scalar(1.0), &scalar(1.0), &scalar(1.0), &scalar(1.0), 1e-12).unwrap();
        assert_abs_diff_eq!(p[(0, 0)], (1.0 + 5f64.sqrt()) / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn riccati_detects_divergence() {
        // B = 0 with unstable A: not stabilizable
        let err = riccati_solve(&scalar(2.0), &scalar(0.0), &scalar(1.0), &scalar(1.0), 1e-10);
        assert!(matches!(err, Err(Error::RiccatiDivergence { .. })));
    }

    #[test]
    fn single_wagon_dynamics() {
        let (a, b) = ChainConfig::with_wagons(1).dynamics();
        assert_abs_diff_eq!(a, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, -0.1, 0.9]), epsilon = 1e-15);
        assert_abs_diff_eq!(b, DMatrix::from_row_slice(2, 1, &[0.0, 0.1]), epsilon = 1e-15);
    }

    #[test]
    fn chain_boundary_coupling() {
        let (a, _) = ChainConfig::with_wagons(3).dynamics();
        // velocity rows: [0.1, -0.2, 0.1] pattern, last wagon -0.1
        assert_abs_diff_eq!(a[(3, 0)], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(3, 1)], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(4, 0)], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(4, 1)], -0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(5, 1)], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(a[(5, 2)], -0.1, epsilon = 1e-15);
    }

    #[test]
    fn chain_bounds_symmetric() {
        let p = build_chain_benchmark(&ChainConfig::with_wagons(4), 3, &[2.0; 8]).unwrap();
        assert_eq!((p.nx(), p.nu(), p.nc()), (8, 4, 8));
        for (l, u) in p.lower.iter().zip(&p.upper) {
            assert_eq!(*l, -*u);
        }
        assert_eq!(&p.upper[..4], &[5.0; 4]);
        assert_eq!(&p.upper[4..], &[1.0; 4]);
        assert!(p.is_strictly_feasible());
    }

    #[test]
    fn chain_config_validation() {
        let mut cfg = ChainConfig::with_wagons(0);
        assert!(cfg.validate().is_err());
        cfg.wagons = 2;
        cfg.h = 0.0;
        assert!(cfg.validate().is_err());
        assert!(build_chain_benchmark(&ChainConfig::with_wagons(2), 2, &[0.0; 3]).is_err());
    }

    fn toy() -> MpcProblem {
        MpcProblem {
            a: scalar(1.0),
            b: scalar(1.0),
            c_state: scalar(1.0),
            d_input: scalar(1.0),
            lower: vec![-1.0],
            upper: vec![1.0],
            q: scalar(1.0),
            r: scalar(1.0),
            p: scalar(1.0),
            horizon: 1,
            x0: vec![0.5],
        }
    }

    #[test]
    fn toy_assembly() {
        let qp = assemble_sparse_qp(&toy()).unwrap();
        assert_eq!(qp.e().to_dense(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 1.0, 0.0]));
        assert_eq!(qp.lower(), &[-0.5, -1.5]);
        assert_eq!(qp.upper(), &[-0.5, 0.5]);
        assert!(qp.is_equality_row(0));
    }

    #[test]
    fn validation_catches_bad_weights() {
        let mut p = toy();
        p.q = scalar(-1.0);
        assert!(p.validate().is_err());
        let mut p = toy();
        p.lower = vec![1.0];
        assert!(p.validate().is_err());
        let mut p = toy();
        p.horizon = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn dimensions_and_layout() {
        let p = build_chain_benchmark(&ChainConfig::with_wagons(3), 4, &[1.0; 6]).unwrap();
        let qp = assemble_sparse_qp(&p).unwrap();
        assert_eq!(qp.ny(), 4 * (3 + 6));
        assert_eq!(qp.nz(), 4 * (6 + 6));
        let l = qp.layout().unwrap();
        assert_eq!(l.u(0), 0..3);
        assert_eq!(l.x(1), 3..9);
        assert_eq!(l.u(1), 9..12);
        assert_eq!(l.x(4), 30..36);
        assert_eq!(l.inequality_rows(1), 18..24);
        for k in 0..4 {
            for i in l.dynamics_rows(k) {
                assert!(qp.is_equality_row(i));
            }
        }
    }

    #[test]
    fn initial_state_update() {
        let p = build_chain_benchmark(&ChainConfig::with_wagons(2), 3, &[1.0; 4]).unwrap();
        let qp = assemble_sparse_qp(&p).unwrap();
        let zero = crate::qp::update_initial_state(&qp, &[0.0; 4]).unwrap();
        let l = qp.layout().unwrap();
        for (j, i) in l.inequality_rows(0).enumerate() {
            assert_eq!(zero.lower()[i], p.lower[j]);
            assert_eq!(zero.upper()[i], p.upper[j]);
        }
        for i in l.dynamics_rows(0) {
            assert_eq!(zero.lower()[i], 0.0);
        }
        // rows past the first block are untouched
        assert_eq!(&zero.lower()[l.stage_rows()..], &qp.lower()[l.stage_rows()..]);
        let again = crate::qp::update_initial_state(&zero, &[1.0; 4]).unwrap();
        assert_eq!(again, qp);
        assert!(crate::qp::update_initial_state(&qp, &[1.0; 3]).is_err());
    }
}
