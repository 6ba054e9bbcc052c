//! Reduced consensus KKT system.
//!
//! The consensus step solves
//!
//! ```text
//! [ H  0  Eᵀ ] [y⁺]   [Hv − h]
//! [ 0  K  −1 ] [z⁺] = [Kw − k]
//! [ E  −1  0 ] [λ⁺]   [  0   ]
//! ```
//!
//! With `K` diagonal, `z⁺ = w + K⁻¹(λ⁺ − k)` and the remaining system
//! `[[H, Eᵀ], [E, −K⁻¹]] (y⁺, λ⁺) = (Hv − h, w − K⁻¹k)` is quasi-definite.
//! Only the `−K⁻¹` diagonal changes between barrier updates, so the symbolic
//! analysis is done once.

use crate::error::Result;
use crate::ldlt::{LdltFactorization, Ordering};
use crate::qp::StageLayout;
use crate::sparse::{norm_inf, SparseMatrix};

/// Fill-reducing ordering of the reduced KKT matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KktOrdering {
    /// Approximate minimum degree. Single-variable bound rows are eliminated
    /// first, which the banded order cannot exploit.
    #[default]
    Auto,
    /// Variables first, then multipliers.
    Natural,
    /// `u_k`, stage-`k` multipliers, `x_{k+1}` for each stage; requires a layout.
    Banded,
    Amd,
}

/// Residual threshold (relative) above which a refinement step is taken.
const REFINE_THRESHOLD: f64 = 1e-13;
const MAX_REFINE: usize = 3;

#[derive(Debug, Clone)]
pub(crate) struct ReducedKkt {
    ny: usize,
    nz: usize,
    /// Lower triangle of the reduced matrix.
    lower: SparseMatrix,
    /// Position in `lower.values()` of each `−K⁻¹` diagonal entry.
    diag_pos: Vec<usize>,
    h: SparseMatrix,
    e: SparseMatrix,
    k_inv: Vec<f64>,
    factor: LdltFactorization,
    rhs: Vec<f64>,
    sol: Vec<f64>,
    res: Vec<f64>,
    work: Vec<f64>,
}

/// Banded elimination order over `[y; λ]` for an MPC stage layout.
pub(crate) fn banded_order(layout: &StageLayout) -> Vec<usize> {
    let ny = layout.ny();
    let mut perm = Vec::with_capacity(ny + layout.nz());
    for k in 0..layout.horizon {
        perm.extend(layout.u(k));
        perm.extend(layout.stage_row_block(k).map(|i| ny + i));
        perm.extend(layout.x(k + 1));
    }
    perm
}

pub(crate) fn resolve_ordering(
    ordering: KktOrdering,
    layout: Option<&StageLayout>,
    ny: usize,
    nz: usize,
) -> Ordering {
    match (ordering, layout) {
        (KktOrdering::Natural, _) => Ordering::Natural,
        (KktOrdering::Amd | KktOrdering::Auto, _) => Ordering::Amd,
        (KktOrdering::Banded, Some(l))
            if l.ny() == ny && l.nz() == nz =>
        {
            Ordering::Given(banded_order(l))
        }
        _ => Ordering::Amd,
    }
}

/// Lower triangle of `[[top, Eᵀ], [E, diag(bottom)]]`, returning the value
/// positions of the bottom diagonal.
pub(crate) fn saddle_lower(
    top: &SparseMatrix,
    e: &SparseMatrix,
    bottom: &[f64],
) -> (SparseMatrix, Vec<usize>) {
    let ny = top.ncols();
    let nz = e.nrows();
    let mut t: Vec<(usize, usize, f64)> =
        top.triplets().filter(|&(r, c, _)| r >= c).collect();
    t.extend(e.triplets().map(|(r, c, v)| (ny + r, c, v)));
    t.extend(bottom.iter().enumerate().map(|(i, &v)| (ny + i, ny + i, v)));
    let m = SparseMatrix::from_triplets(ny + nz, ny + nz, &t).expect("valid saddle indices");
    // bottom columns hold only their diagonal
    let diag_pos = (0..nz).map(|i| m.col_ptr()[ny + i]).collect();
    (m, diag_pos)
}

pub(crate) fn saddle_signs(ny: usize, nz: usize) -> Vec<f64> {
    let mut s = vec![1.0; ny];
    s.resize(ny + nz, -1.0);
    s
}

impl ReducedKkt {
    pub(crate) fn new(
        h: &SparseMatrix,
        e: &SparseMatrix,
        kdiag: &[f64],
        ordering: Ordering,
    ) -> Result<Self> {
        let ny = h.ncols();
        let nz = e.nrows();
        let k_inv: Vec<f64> = kdiag.iter().map(|k| 1.0 / k).collect();
        let neg: Vec<f64> = k_inv.iter().map(|v| -v).collect();
        let (lower, diag_pos) = saddle_lower(h, e, &neg);
        let factor = LdltFactorization::with_signs(&lower, ordering, &saddle_signs(ny, nz))?;
        Ok(Self {
            ny,
            nz,
            lower,
            diag_pos,
            h: h.clone(),
            e: e.clone(),
            k_inv,
            factor,
            rhs: vec![0.0; ny + nz],
            sol: vec![0.0; ny + nz],
            res: vec![0.0; ny + nz],
            work: vec![0.0; ny + nz],
        })
    }

    /// Numeric refactorization for a new `K`.
    pub(crate) fn update_k(&mut self, kdiag: &[f64]) -> Result<()> {
        for (i, &k) in kdiag.iter().enumerate() {
            self.k_inv[i] = 1.0 / k;
        }
        let values = self.lower.values_mut();
        for (i, &p) in self.diag_pos.iter().enumerate() {
            values[p] = -self.k_inv[i];
        }
        self.factor.refactor_in_place(&self.lower)
    }

    pub(crate) fn factor(&self) -> &LdltFactorization {
        &self.factor
    }

    /// `M x` for the full reduced matrix.
    fn apply(&mut self, x: &[f64], out: &mut [f64]) {
        let (xy, xl) = x.split_at(self.ny);
        let (oy, ol) = out.split_at_mut(self.ny);
        self.h.mul_vec_into(xy, oy);
        let etl = &mut self.work[..self.ny];
        self.e.mul_t_vec_into(xl, etl);
        for (o, v) in oy.iter_mut().zip(etl.iter()) {
            *o += v;
        }
        self.e.mul_vec_into(xy, ol);
        for (i, o) in ol.iter_mut().enumerate() {
            *o -= self.k_inv[i] * xl[i];
        }
    }

    /// Solves for `(y⁺, λ⁺)` given `top = Hv − h`, `w` and `k`; writes `z⁺`.
    pub(crate) fn solve(
        &mut self,
        top: &[f64],
        w: &[f64],
        k: &[f64],
        y_out: &mut [f64],
        z_out: &mut [f64],
        lambda_out: &mut [f64],
    ) {
        let ny = self.ny;
        self.rhs[..ny].copy_from_slice(top);
        for i in 0..self.nz {
            self.rhs[ny + i] = w[i] - self.k_inv[i] * k[i];
        }
        self.sol.copy_from_slice(&self.rhs);
        self.factor.solve_in_place(&mut self.sol, &mut self.work);

        let scale = 1.0 + norm_inf(&self.rhs);
        for _ in 0..MAX_REFINE {
            let mut res = std::mem::take(&mut self.res);
            let sol = std::mem::take(&mut self.sol);
            self.apply(&sol, &mut res);
            self.sol = sol;
            for (r, b) in res.iter_mut().zip(&self.rhs) {
                *r = b - *r;
            }
            let small = norm_inf(&res) <= REFINE_THRESHOLD * scale;
            if !small {
                self.factor.solve_in_place(&mut res, &mut self.work);
                for (s, d) in self.sol.iter_mut().zip(&res) {
                    *s += d;
                }
            }
            self.res = res;
            if small {
                break;
            }
        }

        y_out.copy_from_slice(&self.sol[..ny]);
        for i in 0..self.nz {
            let lam = self.sol[ny + i];
            lambda_out[i] = lam;
            z_out[i] = w[i] + self.k_inv[i] * (lam - k[i]);
        }
    }
}
