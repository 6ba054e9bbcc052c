//! Brute-force reference solver for small box-constrained QPs
//! `min ½yᵀ𝒬y` s.t. `z̲ ≤ Ey ≤ z̄`.
//!
//! Active sets are enumerated by increasing size. For every set of rows the
//! equality-constrained KKT matrix is factorized once with dense LU (SVD
//! pseudo-inverse when singular) and every choice of lower/upper side is
//! checked for primal feasibility and multiplier signs. Nothing here shares
//! code with the sparse factorization.

use nalgebra::{DMatrix, DVector, LU, SVD};

use crate::error::{Error, Result};
use crate::qp::SparseQP;

/// Largest admissible `n_y` or `n_z`.
pub const MAX_DIM: usize = 25;

const FEAS_TOL: f64 = 1e-9;
const SIGN_TOL: f64 = 1e-9;
const CONSISTENCY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseQP {
    pub q: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub lambda: Vec<f64>,
    pub value: f64,
    /// Rows fixed at a bound, with `-1` for lower and `+1` for upper.
    pub active: Vec<(usize, i8)>,
}

impl DenseQP {
    pub fn new(q: DMatrix<f64>, e: DMatrix<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let (ny, nz) = (q.ncols(), e.nrows());
        if q.nrows() != ny || e.ncols() != ny || lower.len() != nz || upper.len() != nz {
            return Err(Error::InvalidInput("inconsistent dense QP dimensions".into()));
        }
        for size in [ny, nz] {
            if size > MAX_DIM {
                return Err(Error::BudgetExceeded { size, budget: MAX_DIM });
            }
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidInput("lower bound exceeds upper bound".into()));
        }
        Ok(Self { q, e, lower, upper })
    }

    pub fn from_sparse(qp: &SparseQP) -> Result<Self> {
        Self::new(qp.q().to_dense(), qp.e().to_dense(), qp.lower().to_vec(), qp.upper().to_vec())
    }

    pub fn ny(&self) -> usize {
        self.q.ncols()
    }

    pub fn nz(&self) -> usize {
        self.e.nrows()
    }

    pub fn objective(&self, y: &[f64]) -> f64 {
        let y = DVector::from_column_slice(y);
        0.5 * y.dot(&(&self.q * &y))
    }

    /// Largest bound violation of `Ey`.
    pub fn infeasibility(&self, y: &[f64]) -> f64 {
        let z = &self.e * DVector::from_column_slice(y);
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .fold(0.0, |m, (&zi, (&l, &u))| m.max(l - zi).max(zi - u))
    }

    fn is_equality(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }
}

/// Global minimizer by active-set enumeration.
pub fn solve_reference(qp: &DenseQP) -> Result<ReferenceSolution> {
    let (ny, nz) = (qp.ny(), qp.nz());
    let equalities: Vec<usize> = (0..nz).filter(|&i| qp.is_equality(i)).collect();
    let free_rows: Vec<usize> = (0..nz).filter(|&i| !qp.is_equality(i)).collect();
    // some optimal point has linearly independent active rows
    let max_extra = free_rows.len().min(ny);

    for size in 0..=max_extra {
        let mut best: Option<ReferenceSolution> = None;
        for_each_subset(free_rows.len(), size, |subset| {
            let rows: Vec<usize> = equalities
                .iter()
                .copied()
                .chain(subset.iter().map(|&s| free_rows[s]))
                .collect();
            try_rows(qp, &rows, equalities.len(), &mut best);
        });
        if let Some(sol) = best {
            return Ok(sol);
        }
    }
    Err(Error::Infeasible)
}

/// Calls `f` with every `size`-subset of `0..n` in lexicographic order.
fn for_each_subset(n: usize, size: usize, mut f: impl FnMut(&[usize])) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        f(&idx);
        let mut i = size;
        while i > 0 && idx[i - 1] == i - 1 + n - size {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

enum KktSolver {
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
    Pinv(DMatrix<f64>),
}

/// Tries every side assignment for the rows `rows` (the first `n_eq` of which
/// are equality rows) and keeps the best accepted candidate in `best`.
fn try_rows(qp: &DenseQP, rows: &[usize], n_eq: usize, best: &mut Option<ReferenceSolution>) {
    let (ny, na) = (qp.ny(), rows.len());
    let dim = ny + na;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (ny, ny)).copy_from(&qp.q);
    for (a, &i) in rows.iter().enumerate() {
        for j in 0..ny {
            let v = qp.e[(i, j)];
            kkt[(ny + a, j)] = v;
            kkt[(j, ny + a)] = v;
        }
    }
    let lu = kkt.clone().lu();
    let pivots = lu.u().diagonal();
    let pivot_max = pivots.amax();
    let solver = if pivot_max > 0.0 && pivots.iter().all(|d| d.abs() > 1e-12 * pivot_max) {
        KktSolver::Lu(lu)
    } else {
        let svd = SVD::new(kkt.clone(), true, true);
        match svd.pseudo_inverse(1e-10) {
            Ok(p) => KktSolver::Pinv(p),
            Err(_) => return,
        }
    };

    let sides = na - n_eq;
    // rows with a single finite bound only try that side
    'pattern: for pattern in 0u32..(1u32 << sides) {
        let mut rhs = DVector::zeros(dim);
        let mut side = vec![0i8; na];
        for a in 0..na {
            let i = rows[a];
            let target = if a < n_eq {
                qp.lower[i]
            } else if pattern >> (a - n_eq) & 1 == 0 {
                side[a] = -1;
                qp.lower[i]
            } else {
                side[a] = 1;
                qp.upper[i]
            };
            if !target.is_finite() {
                continue 'pattern;
            }
            rhs[ny + a] = target;
        }
        let x = match &solver {
            KktSolver::Lu(lu) => match lu.solve(&rhs) {
                Some(x) => x,
                None => continue,
            },
            KktSolver::Pinv(p) => {
                let x = p * &rhs;
                let res = &kkt * &x - &rhs;
                if res.amax() > CONSISTENCY_TOL * (1.0 + rhs.amax()) {
                    continue;
                }
                x
            }
        };
        let y: Vec<f64> = x.rows(0, ny).iter().copied().collect();
        let scale = 1.0 + x.amax();
        if qp.infeasibility(&y) > FEAS_TOL * scale {
            continue;
        }
        let mut lambda = vec![0.0; qp.nz()];
        for a in 0..na {
            let l = x[ny + a];
            match side[a] {
                -1 if l > SIGN_TOL * scale => continue 'pattern,
                1 if l < -SIGN_TOL * scale => continue 'pattern,
                _ => {}
            }
            lambda[rows[a]] = l;
        }
        let value = qp.objective(&y);
        if best.as_ref().is_some_and(|b| b.value <= value) {
            continue;
        }
        let z: Vec<f64> = (&qp.e * DVector::from_column_slice(&y)).iter().copied().collect();
        let active = rows.iter().zip(&side).map(|(&i, &s)| (i, s)).collect();
        *best = Some(ReferenceSolution { y, z, lambda, value, active });
    }
}
