//! Active-set guess: fix the rows clamped by the last projection (plus all
//! equality rows) at their bounds and solve the resulting equality-constrained
//! QP exactly.

use crate::ldlt::{LdltFactorization, Ordering};
use crate::qp::SparseQP;
use crate::sparse::{norm_inf, SparseMatrix};

use super::kkt::{saddle_lower, saddle_signs};
use super::{IterateState, SolverConfig};

/// Static regularization of the equality-constrained KKT matrix; removed
/// again by iterative refinement.
const DELTA: f64 = 1e-9;
const MAX_REFINE: usize = 25;

/// Returns `(y, λ)` if the guessed active set yields a point satisfying the
/// KKT conditions of the QP within `10·tol`; `None` otherwise.
pub fn active_set_guess(
    state: &IterateState,
    qp: &SparseQP,
    cfg: &SolverConfig,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let ny = qp.ny();
    let clamped = state.clamped();
    let rows: Vec<usize> = (0..qp.nz())
        .filter(|&i| clamped[i] != 0 || qp.is_equality_row(i))
        .collect();
    let target: Vec<f64> = rows
        .iter()
        .map(|&i| {
            if qp.is_equality_row(i) || clamped[i] < 0 {
                qp.lower()[i]
            } else {
                qp.upper()[i]
            }
        })
        .collect();
    if target.iter().any(|v| !v.is_finite()) {
        return None;
    }

    let (y, lambda_active) = solve_equality_qp(qp.q(), qp.e(), &rows, &target)?;

    let mut lambda = vec![0.0; qp.nz()];
    for (&i, &l) in rows.iter().zip(&lambda_active) {
        lambda[i] = l;
    }
    if accept(qp, cfg.tol, clamped, &y, &lambda) {
        debug_assert_eq!(y.len(), ny);
        Some((y, lambda))
    } else {
        None
    }
}

/// `min ½yᵀ𝒬y` s.t. `E_A y = b`. Singular or inconsistent systems yield `None`.
pub(crate) fn solve_equality_qp(
    q: &SparseMatrix,
    e: &SparseMatrix,
    rows: &[usize],
    target: &[f64],
) -> Option<(Vec<f64>, Vec<f64>)> {
    let ny = q.ncols();
    let na = rows.len();
    let mut pos = vec![usize::MAX; e.nrows()];
    for (a, &i) in rows.iter().enumerate() {
        pos[i] = a;
    }
    let ea_t: Vec<_> = e
        .triplets()
        .filter(|&(r, _, _)| pos[r] != usize::MAX)
        .map(|(r, c, v)| (pos[r], c, v))
        .collect();
    let ea = SparseMatrix::from_triplets(na, ny, &ea_t).ok()?;

    let (lower, _) = saddle_lower(&q.add_diagonal(DELTA), &ea, &vec![-DELTA; na]);
    let factor = LdltFactorization::with_signs(&lower, Ordering::Amd, &saddle_signs(ny, na)).ok()?;

    let mut rhs = vec![0.0; ny];
    rhs.extend_from_slice(target);
    let scale = 1.0 + norm_inf(&rhs);
    let mut x = rhs.clone();
    let mut work = vec![0.0; ny + na];
    factor.solve_in_place(&mut x, &mut work);

    // refine against the unregularized system [[𝒬, E_Aᵀ], [E_A, 0]]
    let mut res = vec![0.0; ny + na];
    let mut converged = false;
    for _ in 0..MAX_REFINE {
        let (xy, xl) = x.split_at(ny);
        let (ry, rl) = res.split_at_mut(ny);
        q.mul_vec_into(xy, ry);
        let mut etl = vec![0.0; ny];
        ea.mul_t_vec_into(xl, &mut etl);
        for i in 0..ny {
            ry[i] = rhs[i] - ry[i] - etl[i];
        }
        ea.mul_vec_into(xy, rl);
        for i in 0..na {
            rl[i] = rhs[ny + i] - rl[i];
        }
        if !res.iter().all(|v| v.is_finite()) {
            return None;
        }
        if norm_inf(&res) <= 1e-13 * scale {
            converged = true;
            break;
        }
        factor.solve_in_place(&mut res, &mut work);
        for (xi, d) in x.iter_mut().zip(&res) {
            *xi += d;
        }
    }
    if !converged {
        return None;
    }
    let lambda = x.split_off(ny);
    Some((x, lambda))
}

fn accept(qp: &SparseQP, tol: f64, clamped: &[i8], y: &[f64], lambda: &[f64]) -> bool {
    let slack = 10.0 * tol;
    let z = qp.e().spmv(y, false).expect("dimensions fixed");
    for i in 0..qp.nz() {
        if z[i] < qp.lower()[i] - slack || z[i] > qp.upper()[i] + slack {
            return false;
        }
        if qp.is_equality_row(i) {
            continue;
        }
        // multiplier of Ey = z in F + G + λᵀ(Ey − z) lies in the normal cone
        match clamped[i] {
            -1 if lambda[i] > slack => return false,
            1 if lambda[i] < -slack => return false,
            _ => {}
        }
    }
    super::stationarity(qp, y, lambda) <= slack
}
