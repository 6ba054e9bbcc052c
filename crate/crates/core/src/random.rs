//! Random problem generators for tests and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::Result;
use crate::qp::SparseQP;
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomQpSpec {
    pub ny: usize,
    pub nz: usize,
    /// Use `𝒬 = 0`.
    pub zero_objective: bool,
    /// Probability that an entry of `E` is structurally nonzero.
    pub density: f64,
}

/// Random feasible QP. Bounds are placed around `E ŷ` for a random `ŷ`, with
/// a mix of equality, two-sided and one-sided rows; `E` has no empty rows.
/// With `zero_objective` the first `ny` rows are two-sided bounds on single
/// variables, which keeps the feasible set bounded.
pub fn random_qp<R: Rng + ?Sized>(rng: &mut R, spec: RandomQpSpec) -> Result<SparseQP> {
    let RandomQpSpec { ny, nz, zero_objective, density } = spec;
    let q = if zero_objective {
        DMatrix::zeros(ny, ny)
    } else {
        let l = DMatrix::from_fn(ny, ny, |_, _| rng.random_range(-1.0..1.0));
        &l * l.transpose() + DMatrix::identity(ny, ny) * 0.1
    };

    let mut e = DMatrix::zeros(nz, ny);
    for i in 0..nz {
        if zero_objective && i < ny {
            e[(i, i)] = 1.0;
            continue;
        }
        for j in 0..ny {
            if rng.random_bool(density) {
                e[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let j = rng.random_range(0..ny);
        if e.row(i).iter().all(|&v| v == 0.0) {
            e[(i, j)] = rng.random_range(0.5..1.0);
        }
    }

    let y_hat: Vec<f64> = (0..ny).map(|_| rng.random_range(-1.0..1.0)).collect();
    let z_hat = &e * nalgebra::DVector::from_vec(y_hat);
    let mut lower = vec![0.0; nz];
    let mut upper = vec![0.0; nz];
    for i in 0..nz {
        let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
        let kind = if zero_objective && i < ny { 1 } else { rng.random_range(0..10) };
        (lower[i], upper[i]) = match kind {
            0 => (z_hat[i], z_hat[i]),
            1..=6 => (z_hat[i] - a, z_hat[i] + b),
            7 | 8 => (z_hat[i] - a, f64::INFINITY),
            _ => (f64::NEG_INFINITY, z_hat[i] + b),
        };
    }
    // symmetrize exactly
    let q = (&q + q.transpose()) * 0.5;
    SparseQP::new(SparseMatrix::from_dense(&q), SparseMatrix::from_dense(&e), lower, upper)
}

/// Random `(A, B)` with `A` scaled to spectral norm bound `radius` (may be
/// unstable) and dense `B`; generically controllable.
pub fn random_pair<R: Rng + ?Sized>(
    rng: &mut R,
    nx: usize,
    nu: usize,
    radius: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let a: DMatrix<f64> = DMatrix::from_fn(nx, nx, |_, _| rng.random_range(-1.0..1.0));
    let norm = a.norm().max(f64::MIN_POSITIVE);
    let a = a * (radius / norm);
    let b = DMatrix::from_fn(nx, nu, |_, _| rng.random_range(-1.0..1.0));
    (a, b)
}
