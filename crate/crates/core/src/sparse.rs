//! Compressed sparse column storage.

use nalgebra::DMatrix;

use crate::error::{check_len, Error, Result};

/// Column-compressed sparse matrix, 0-based, rows strictly increasing within
/// each column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds a matrix from raw CSC arrays, validating every structural invariant.
    pub fn new(
        nrows: usize,
        ncols: usize,
        col_ptr: Vec<usize>,
        row_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        check_len("column pointer", ncols + 1, col_ptr.len())?;
        check_len("row index", values.len(), row_idx.len())?;
        if col_ptr[0] != 0 || col_ptr[ncols] != row_idx.len() {
            return Err(Error::InvalidInput(
                "column pointers must start at 0 and end at nnz".into(),
            ));
        }
        for j in 0..ncols {
            let (start, end) = (col_ptr[j], col_ptr[j + 1]);
            if start > end {
                return Err(Error::InvalidInput(format!(
                    "column pointer decreases at column {j}"
                )));
            }
            let rows = &row_idx[start..end];
            if rows.iter().any(|&r| r >= nrows) {
                return Err(Error::InvalidInput(format!(
                    "row index out of range in column {j}"
                )));
            }
            if rows.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!(
                    "row indices not strictly increasing in column {j}"
                )));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    /// Builds a matrix from `(row, col, value)` triplets. Duplicate coordinates
    /// are summed; explicit zeros are kept as structural entries.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= nrows || c >= ncols {
                return Err(Error::InvalidInput(format!(
                    "triplet ({r}, {c}) outside a {nrows}x{ncols} matrix"
                )));
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        // stable sort keeps duplicate summation order deterministic
        sorted.sort_by_key(|&(r, c, _)| (c, r));

        let mut col_ptr = vec![0; ncols + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            col_ptr: vec![0; ncols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![1.0; n])
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self {
            nrows: n,
            ncols: n,
            col_ptr: (0..=n).collect(),
            row_idx: (0..n).collect(),
            values: diag.to_vec(),
        }
    }

    /// Converts a dense matrix, dropping exact zeros.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut col_ptr = Vec::with_capacity(m.ncols() + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    row_idx.push(i);
                    values.push(v);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self {
            nrows: m.nrows(),
            ncols: m.ncols(),
            col_ptr,
            row_idx,
            values,
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Row indices and values of column `j`.
    pub fn col(&self, j: usize) -> (&[usize], &[f64]) {
        let range = self.col_ptr[j]..self.col_ptr[j + 1];
        (&self.row_idx[range.clone()], &self.values[range])
    }

    /// Stored entries in column-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            let (rows, vals) = self.col(j);
            rows.iter().zip(vals).map(move |(&r, &v)| (r, j, v))
        })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let (rows, vals) = self.col(col);
        match rows.binary_search(&row) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.nrows + 1];
        for &r in &self.row_idx {
            counts[r + 1] += 1;
        }
        for i in 0..self.nrows {
            counts[i + 1] += counts[i];
        }
        let col_ptr = counts.clone();
        let mut next = counts;
        let mut row_idx = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (r, c, v) in self.triplets() {
            let p = next[r];
            row_idx[p] = c;
            values[p] = v;
            next[r] += 1;
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            col_ptr,
            row_idx,
            values,
        }
    }

    /// Entries on or below the diagonal.
    pub fn lower_triangle(&self) -> Self {
        let keep: Vec<_> = self.triplets().filter(|&(r, c, _)| r >= c).collect();
        Self::from_triplets(self.nrows, self.ncols, &keep).expect("indices already validated")
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols))
            .map(|i| self.get(i, i))
            .collect()
    }

    /// Returns `M x`, or `Mᵀ x` when `transposed`.
    pub fn spmv(&self, x: &[f64], transposed: bool) -> Result<Vec<f64>> {
        if transposed {
            check_len("spmv operand", self.nrows, x.len())?;
            let mut out = vec![0.0; self.ncols];
            self.mul_t_vec_into(x, &mut out);
            Ok(out)
        } else {
            check_len("spmv operand", self.ncols, x.len())?;
            let mut out = vec![0.0; self.nrows];
            self.mul_vec_into(x, &mut out);
            Ok(out)
        }
    }

    /// `out ← M x`, column-major accumulation.
    pub fn mul_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        out.iter_mut().for_each(|o| *o = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                out[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }

    /// `out ← Mᵀ x`.
    pub fn mul_t_vec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(out.len(), self.ncols);
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.values[p] * x[self.row_idx[p]];
            }
            *o = acc;
        }
    }

    /// `M + alpha·I` for square `M`, inserting missing diagonal entries.
    pub fn add_diagonal(&self, alpha: f64) -> Self {
        assert_eq!(self.nrows, self.ncols, "add_diagonal needs a square matrix");
        let mut t: Vec<_> = self.triplets().collect();
        t.extend((0..self.nrows).map(|i| (i, i, alpha)));
        Self::from_triplets(self.nrows, self.ncols, &t).expect("indices already validated")
    }

    pub fn scale(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && self.triplets().all(|(r, c, v)| self.get(c, r) == v)
    }
}

/// Infinity norm of a vector (0 for empty input).
pub fn norm_inf(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spmv() {
        let m = SparseMatrix::identity(2);
        assert_eq!(m.spmv(&[3.0, -1.0], false).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn single_entry_and_transpose() {
        let m = SparseMatrix::from_triplets(2, 2, &[(0, 1, 1.0)]).unwrap();
        assert_eq!(m.spmv(&[0.0, 5.0], false).unwrap(), vec![5.0, 0.0]);
        assert_eq!(m.spmv(&[5.0, 0.0], true).unwrap(), vec![0.0, 5.0]);
        assert_eq!(m.transpose().get(1, 0), 1.0);
    }

    #[test]
    fn spmv_dimension_errors() {
        let m = SparseMatrix::zeros(2, 3);
        assert!(matches!(
            m.spmv(&[1.0, 2.0], false),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(m.spmv(&[1.0, 2.0], true).is_ok());
        assert!(m.spmv(&[1.0, 2.0, 3.0], true).is_err());
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m =
            SparseMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 0, 2.0), (1, 0, 0.5)]).unwrap();
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 0), 1.5);
        assert_eq!(m.row_idx(), &[0, 1]);
    }

    #[test]
    fn new_rejects_bad_structure() {
        assert!(SparseMatrix::new(2, 1, vec![0, 2], vec![1, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(2, 1, vec![0, 1], vec![2], vec![1.0]).is_err());
        assert!(SparseMatrix::new(2, 1, vec![0, 2], vec![0, 0], vec![1.0, 1.0]).is_err());
        assert!(SparseMatrix::new(2, 1, vec![0, 2], vec![0, 1], vec![1.0, 1.0]).is_ok());
        assert!(SparseMatrix::from_triplets(2, 2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn dense_round_trip() {
        let d = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 2.0, 0.0, -3.0, 0.0]);
        let s = SparseMatrix::from_dense(&d);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), d);
        assert_eq!(s.transpose().to_dense(), d.transpose());
    }

    #[test]
    fn add_diagonal_fills_gaps() {
        let m = SparseMatrix::from_triplets(2, 2, &[(1, 0, 1.0), (0, 1, 1.0)]).unwrap();
        let m = m.add_diagonal(3.0);
        assert_eq!(m.diag(), vec![3.0, 3.0]);
        assert!(m.is_symmetric());
    }
}
