//! Up-looking sparse LDLᵀ factorization for symmetric quasi-definite matrices.
//!
//! The factorization works without dynamic pivoting: a symmetric permutation is
//! fixed during symbolic analysis and the numeric phase only fills in values.
//! This is sufficient for positive definite matrices and for quasi-definite
//! saddle-point matrices `[[H, Eᵀ], [E, −G]]` with `H ≻ 0`, `G ≻ 0`, which
//! admit an `LDLᵀ` factorization under any symmetric permutation.
//!
//! Only the lower triangle (including the diagonal) of the input is read.

use std::sync::Arc;

use crate::error::{check_len, Error, Result};
use crate::sparse::SparseMatrix;

/// Pivots whose magnitude falls below this are treated as zero.
pub const ZERO_PIVOT: f64 = 1e-14;
/// Magnitude substituted for an underflowing pivot when its sign is known.
pub const PIVOT_REGULARIZATION: f64 = 1e-12;

const NONE: usize = usize::MAX;

/// Fill-reducing ordering used during symbolic analysis.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Ordering {
    /// Factor in the given index order.
    #[default]
    Natural,
    /// Approximate minimum degree.
    Amd,
    /// `perm[k]` is the original index eliminated at step `k`.
    Given(Vec<usize>),
}

/// Sparsity-dependent part of the factorization, shareable across numeric
/// refactorizations of matrices with identical patterns.
#[derive(Debug)]
struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    /// Lower-triangle pattern of the source matrix.
    src_col_ptr: Vec<usize>,
    src_row_idx: Vec<usize>,
    /// Upper-triangle pattern of the permuted matrix.
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
    /// Position in the permuted arrays of each source entry (`NONE` if above the diagonal).
    src_to_a: Vec<usize>,
    etree: Vec<usize>,
    l_col_ptr: Vec<usize>,
    /// Expected pivot signs in permuted order, if known.
    signs: Option<Vec<f64>>,
}

/// `P M Pᵀ = L D Lᵀ` with unit lower-triangular `L` and signed diagonal `D`.
#[derive(Debug, Clone)]
pub struct LdltFactorization {
    symbolic: Arc<Symbolic>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    d: Vec<f64>,
    d_inv: Vec<f64>,
    regularized: usize,
}

/// Factors `m`, reusing the symbolic analysis of `prior` when given.
///
/// Without a prior factorization the natural ordering is used.
pub fn ldlt_factor(
    m: &SparseMatrix,
    prior: Option<&LdltFactorization>,
) -> Result<LdltFactorization> {
    match prior {
        Some(p) => p.refactor(m),
        None => LdltFactorization::new(m, Ordering::Natural),
    }
}

/// Solves `M x = b` with a factorization of `M`.
pub fn ldlt_solve(f: &LdltFactorization, b: &[f64]) -> Result<Vec<f64>> {
    f.solve(b)
}

impl LdltFactorization {
    pub fn new(m: &SparseMatrix, ordering: Ordering) -> Result<Self> {
        Self::build(m, ordering, None)
    }

    /// Factors a matrix whose pivots have known signs (`+1` or `−1` per
    /// original index). Pivots that underflow are replaced by
    /// `sign · PIVOT_REGULARIZATION` instead of failing.
    pub fn with_signs(m: &SparseMatrix, ordering: Ordering, signs: &[f64]) -> Result<Self> {
        check_len("pivot signs", m.nrows(), signs.len())?;
        Self::build(m, ordering, Some(signs))
    }

    fn build(m: &SparseMatrix, ordering: Ordering, signs: Option<&[f64]>) -> Result<Self> {
        let symbolic = Arc::new(Symbolic::analyze(m, ordering, signs)?);
        let mut f = Self::empty(symbolic);
        f.numeric(m.values())?;
        Ok(f)
    }

    fn empty(symbolic: Arc<Symbolic>) -> Self {
        let n = symbolic.n;
        let lnz = symbolic.l_col_ptr[n];
        Self {
            symbolic,
            l_row_idx: vec![0; lnz],
            l_values: vec![0.0; lnz],
            d: vec![0.0; n],
            d_inv: vec![0.0; n],
            regularized: 0,
        }
    }

    /// Numeric refactorization of a matrix with the same pattern.
    pub fn refactor(&self, m: &SparseMatrix) -> Result<Self> {
        let mut f = Self::empty(Arc::clone(&self.symbolic));
        f.refactor_in_place(m)?;
        Ok(f)
    }

    pub fn refactor_in_place(&mut self, m: &SparseMatrix) -> Result<()> {
        let s = &self.symbolic;
        if m.nrows() != s.n
            || m.ncols() != s.n
            || m.col_ptr() != s.src_col_ptr.as_slice()
            || m.row_idx() != s.src_row_idx.as_slice()
        {
            return Err(Error::PatternMismatch);
        }
        self.numeric(m.values())
    }

    pub fn dim(&self) -> usize {
        self.symbolic.n
    }

    /// Strictly-lower nonzeros in `L`.
    pub fn nnz_l(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn perm(&self) -> &[usize] {
        &self.symbolic.perm
    }

    /// Number of pivots replaced by the regularization value.
    pub fn regularized_pivots(&self) -> usize {
        self.regularized
    }

    /// Dense copy of the unit lower-triangular factor (in permuted order).
    pub fn l_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        let mut l = nalgebra::DMatrix::identity(n, n);
        let lp = &self.symbolic.l_col_ptr;
        for j in 0..n {
            for p in lp[j]..lp[j + 1] {
                l[(self.l_row_idx[p], j)] = self.l_values[p];
            }
        }
        l
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        check_len("ldlt right-hand side", self.dim(), b.len())?;
        let mut x = b.to_vec();
        let mut work = vec![0.0; self.dim()];
        self.solve_in_place(&mut x, &mut work);
        Ok(x)
    }

    /// Overwrites `x` with `M⁻¹ x`; `work` must have the factor dimension.
    pub fn solve_in_place(&self, x: &mut [f64], work: &mut [f64]) {
        let s = &self.symbolic;
        let n = s.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(work.len(), n);
        for k in 0..n {
            work[k] = x[s.perm[k]];
        }
        let lp = &s.l_col_ptr;
        for j in 0..n {
            let wj = work[j];
            if wj != 0.0 {
                for p in lp[j]..lp[j + 1] {
                    work[self.l_row_idx[p]] -= self.l_values[p] * wj;
                }
            }
        }
        for j in 0..n {
            work[j] *= self.d_inv[j];
        }
        for j in (0..n).rev() {
            let mut acc = work[j];
            for p in lp[j]..lp[j + 1] {
                acc -= self.l_values[p] * work[self.l_row_idx[p]];
            }
            work[j] = acc;
        }
        for k in 0..n {
            x[s.perm[k]] = work[k];
        }
    }

    fn numeric(&mut self, src_values: &[f64]) -> Result<()> {
        let s = Arc::clone(&self.symbolic);
        let n = s.n;
        let mut a_values = vec![0.0; s.a_row_idx.len()];
        for (p, &q) in s.src_to_a.iter().enumerate() {
            if q != NONE {
                a_values[q] = src_values[p];
            }
        }

        let lp = &s.l_col_ptr;
        let mut next_in_col: Vec<usize> = lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx = vec![0usize; n];
        let mut elim = vec![0usize; n];
        self.regularized = 0;

        for k in 0..n {
            let mut nnz_y = 0;
            let mut dk = 0.0;
            for p in s.a_col_ptr[k]..s.a_col_ptr[k + 1] {
                let i = s.a_row_idx[p];
                if i == k {
                    dk = a_values[p];
                    continue;
                }
                y_vals[i] = a_values[p];
                if !y_marked[i] {
                    // walk up the elimination tree collecting the reach of i
                    y_marked[i] = true;
                    elim[0] = i;
                    let mut ne = 1;
                    let mut next = s.etree[i];
                    while next != NONE && next < k {
                        if y_marked[next] {
                            break;
                        }
                        y_marked[next] = true;
                        elim[ne] = next;
                        ne += 1;
                        next = s.etree[next];
                    }
                    while ne > 0 {
                        ne -= 1;
                        y_idx[nnz_y] = elim[ne];
                        nnz_y += 1;
                    }
                }
            }

            for t in (0..nnz_y).rev() {
                let c = y_idx[t];
                let slot = next_in_col[c];
                let yc = y_vals[c];
                for q in lp[c]..slot {
                    y_vals[self.l_row_idx[q]] -= self.l_values[q] * yc;
                }
                self.l_row_idx[slot] = k;
                let lkc = yc * self.d_inv[c];
                self.l_values[slot] = lkc;
                dk -= yc * lkc;
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }

            if dk.abs() < ZERO_PIVOT {
                if let Some(signs) = &s.signs {
                    dk = signs[k] * PIVOT_REGULARIZATION;
                    self.regularized += 1;
                }
            }
            if !dk.is_finite() || dk.abs() < ZERO_PIVOT {
                return Err(Error::ZeroPivot {
                    index: s.perm[k],
                    value: dk,
                });
            }
            self.d[k] = dk;
            self.d_inv[k] = 1.0 / dk;
        }
        Ok(())
    }
}

impl Symbolic {
    fn analyze(m: &SparseMatrix, ordering: Ordering, signs: Option<&[f64]>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::InvalidInput(format!(
                "ldlt needs a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let perm = match ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::Given(p) => {
                check_len("permutation", n, p.len())?;
                p
            }
            Ordering::Amd => amd_order(m)?,
        };
        let mut iperm = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || iperm[i] != NONE {
                return Err(Error::InvalidInput("ordering is not a permutation".into()));
            }
            iperm[i] = k;
        }

        // Permuted upper triangle: entry (i, j) with i >= j maps to
        // (min(pi, pj), max(pi, pj)).
        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in m.triplets() {
            if r >= c {
                let col = iperm[r].max(iperm[c]);
                counts[col + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let a_col_ptr = counts.clone();
        let mut next = counts;
        let mut a_row_idx = vec![0; a_col_ptr[n]];
        let mut src_to_a = vec![NONE; m.nnz()];
        for (p, (r, c, _)) in m.triplets().enumerate() {
            if r >= c {
                let (pr, pc) = (iperm[r], iperm[c]);
                let (row, col) = (pr.min(pc), pr.max(pc));
                let q = next[col];
                a_row_idx[q] = row;
                src_to_a[p] = q;
                next[col] += 1;
            }
        }

        // Elimination tree and column counts of L.
        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for j in 0..n {
            flag[j] = j;
            for p in a_col_ptr[j]..a_col_ptr[j + 1] {
                let mut i = a_row_idx[p];
                while flag[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    flag[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + lnz[j];
        }

        let signs = signs.map(|s| perm.iter().map(|&i| s[i].signum()).collect());

        Ok(Self {
            n,
            perm,
            src_col_ptr: m.col_ptr().to_vec(),
            src_row_idx: m.row_idx().to_vec(),
            a_col_ptr,
            a_row_idx,
            src_to_a,
            etree,
            l_col_ptr,
            signs,
        })
    }
}

/// AMD ordering of the symmetric pattern whose lower triangle is stored in `m`.
fn amd_order(m: &SparseMatrix) -> Result<Vec<usize>> {
    let n = m.nrows();
    let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * m.nnz());
    for (r, c, _) in m.triplets() {
        if r > c {
            full.push((r, c, 1.0));
            full.push((c, r, 1.0));
        } else if r == c {
            full.push((r, c, 1.0));
        }
    }
    let pattern = SparseMatrix::from_triplets(n, n, &full)?;
    let (p, _, _) = amd::order(
        n,
        pattern.col_ptr(),
        pattern.row_idx(),
        &amd::Control::default(),
    )
    .map_err(|s| Error::Ordering(format!("{s:?}")))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn dense(rows: &[&[f64]]) -> SparseMatrix {
        let n = rows.len();
        let d = nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        SparseMatrix::from_dense(&d)
    }

    #[test]
    fn scalar() {
        let m = dense(&[&[4.0]]);
        let f = ldlt_factor(&m, None).unwrap();
        assert_eq!(f.d(), &[4.0]);
        assert_eq!(f.nnz_l(), 0);
        assert_eq!(ldlt_solve(&f, &[8.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn two_by_two_hand_elimination() {
        let m = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let f = ldlt_factor(&m, None).unwrap();
        assert_abs_diff_eq!(f.d()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f.d()[1], 1.5, epsilon = 1e-15);
        let l = f.l_dense();
        assert_abs_diff_eq!(l[(1, 0)], 0.5, epsilon = 1e-15);
        assert_eq!(l[(0, 1)], 0.0);
        let x = ldlt_solve(&f, &[3.0, 3.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn indefinite_two_by_two() {
        // d = (1, -1): one pivot of each sign.
        let m = dense(&[&[1.0, 1.0], &[1.0, 0.0]]);
        let f = ldlt_factor(&m, None).unwrap();
        assert!(f.d()[0] > 0.0 && f.d()[1] < 0.0);
        let b = [0.3, -1.7];
        let x = f.solve(&b).unwrap();
        let r = m.spmv(&x, false).unwrap();
        for i in 0..2 {
            assert!((r[i] - b[i]).abs() <= 1e-10 * (1.0 + 1.7));
        }
    }

    #[test]
    fn identity_solve() {
        let f = ldlt_factor(&SparseMatrix::identity(3), None).unwrap();
        assert_eq!(f.solve(&[1.0, -2.0, 3.5]).unwrap(), vec![1.0, -2.0, 3.5]);
        assert!(f.solve(&[1.0]).is_err());
    }

    #[test]
    fn zero_pivot_reports_index() {
        let m = dense(&[&[1.0, 0.0], &[0.0, 0.0]]);
        match ldlt_factor(&m, None) {
            Err(Error::ZeroPivot { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        let f = LdltFactorization::with_signs(&m, Ordering::Natural, &[1.0, -1.0]).unwrap();
        assert_eq!(f.regularized_pivots(), 1);
        assert_eq!(f.d()[1], -PIVOT_REGULARIZATION);
    }

    #[test]
    fn upper_entries_are_ignored() {
        let full = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let lower = full.lower_triangle();
        let a = ldlt_factor(&full, None).unwrap().solve(&[1.0, 0.0]).unwrap();
        let b = ldlt_factor(&lower, None).unwrap().solve(&[1.0, 0.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn refactor_requires_same_pattern() {
        let a = dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let b = dense(&[&[2.0, 0.0], &[0.0, 2.0]]);
        let f = ldlt_factor(&a, None).unwrap();
        assert_eq!(ldlt_factor(&b, Some(&f)).unwrap_err(), Error::PatternMismatch);
    }

    #[test]
    fn amd_and_given_orderings_solve() {
        // arrow matrix: dense first row/col, natural order fills completely
        let n = 6;
        let mut t = vec![];
        for i in 0..n {
            t.push((i, i, 10.0));
            if i > 0 {
                t.push((i, 0, 1.0));
            }
        }
        let m = SparseMatrix::from_triplets(n, n, &t).unwrap();
        let b: Vec<f64> = (0..n).map(|i| i as f64 - 2.0).collect();
        let nat = LdltFactorization::new(&m, Ordering::Natural).unwrap();
        let amd = LdltFactorization::new(&m, Ordering::Amd).unwrap();
        let rev = LdltFactorization::new(&m, Ordering::Given((0..n).rev().collect())).unwrap();
        assert!(amd.nnz_l() <= nat.nnz_l());
        assert_eq!(rev.nnz_l(), n - 1);
        let x0 = nat.solve(&b).unwrap();
        for f in [&amd, &rev] {
            let x = f.solve(&b).unwrap();
            for i in 0..n {
                assert_abs_diff_eq!(x[i], x0[i], epsilon = 1e-13);
            }
        }
        assert!(LdltFactorization::new(&m, Ordering::Given(vec![0; n])).is_err());
    }
}
