//! Consensus-form QP: minimize `½ yᵀ𝒬y` subject to `Ey = z`, `z̲ ≤ z ≤ z̄`.

use std::ops::Range;

use crate::error::{check_len, Error, Result};
use crate::sparse::SparseMatrix;

/// Block bookkeeping for QPs assembled from an MPC problem.
///
/// `y = [u₀, x₁, u₁, x₂, …, u_{N−1}, x_N]`; the rows of `E` come in stage
/// blocks of `n_x` dynamics rows followed by `n_c` inequality rows.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLayout {
    pub horizon: usize,
    pub nx: usize,
    pub nu: usize,
    pub nc: usize,
    /// `[A; C]`, the map from `x₀` into the first row block.
    pub x0_map: SparseMatrix,
    /// First row block bounds at `x₀ = 0`: `(0; c)` and `(0; d)`.
    pub x0_lower: Vec<f64>,
    pub x0_upper: Vec<f64>,
}

impl StageLayout {
    pub fn stage_vars(&self) -> usize {
        self.nu + self.nx
    }

    pub fn stage_rows(&self) -> usize {
        self.nx + self.nc
    }

    pub fn ny(&self) -> usize {
        self.horizon * self.stage_vars()
    }

    pub fn nz(&self) -> usize {
        self.horizon * self.stage_rows()
    }

    /// Columns of `u_k`, `k ∈ [0, N)`.
    pub fn u(&self, k: usize) -> Range<usize> {
        let s = k * self.stage_vars();
        s..s + self.nu
    }

    /// Columns of `x_k`, `k ∈ [1, N]`.
    pub fn x(&self, k: usize) -> Range<usize> {
        assert!(k >= 1, "x_0 is a parameter, not a variable");
        let s = (k - 1) * self.stage_vars() + self.nu;
        s..s + self.nx
    }

    /// Dynamics rows of stage `k`.
    pub fn dynamics_rows(&self, k: usize) -> Range<usize> {
        let s = k * self.stage_rows();
        s..s + self.nx
    }

    /// Inequality rows of stage `k`.
    pub fn inequality_rows(&self, k: usize) -> Range<usize> {
        let s = k * self.stage_rows() + self.nx;
        s..s + self.nc
    }

    /// Columns (all variables) of stage `k`: `u_k` followed by `x_{k+1}`.
    pub fn stage_cols(&self, k: usize) -> Range<usize> {
        let s = k * self.stage_vars();
        s..s + self.stage_vars()
    }

    /// All rows of stage `k`.
    pub fn stage_row_block(&self, k: usize) -> Range<usize> {
        let s = k * self.stage_rows();
        s..s + self.stage_rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseQP {
    q: SparseMatrix,
    e: SparseMatrix,
    lower: Vec<f64>,
    upper: Vec<f64>,
    layout: Option<StageLayout>,
}

impl SparseQP {
    /// `q` must be symmetric (both triangles stored); infinite bounds are allowed.
    pub fn new(q: SparseMatrix, e: SparseMatrix, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::InvalidInput("objective matrix must be square".into()));
        }
        check_len("coupling matrix columns", q.ncols(), e.ncols())?;
        check_len("lower bounds", e.nrows(), lower.len())?;
        check_len("upper bounds", e.nrows(), upper.len())?;
        if !q.is_symmetric() {
            return Err(Error::InvalidInput("objective matrix must be symmetric".into()));
        }
        if q.values().iter().chain(e.values()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("matrix entries must be finite".into()));
        }
        for (i, (&l, &u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u || l == f64::INFINITY || u == f64::NEG_INFINITY {
                return Err(Error::InvalidInput(format!(
                    "invalid bounds [{l}, {u}] on row {i}"
                )));
            }
        }
        Ok(Self {
            q,
            e,
            lower,
            upper,
            layout: None,
        })
    }

    pub fn with_layout(mut self, layout: StageLayout) -> Result<Self> {
        check_len("layout variables", self.ny(), layout.ny())?;
        check_len("layout rows", self.nz(), layout.nz())?;
        self.layout = Some(layout);
        Ok(self)
    }

    pub fn q(&self) -> &SparseMatrix {
        &self.q
    }

    pub fn e(&self) -> &SparseMatrix {
        &self.e
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn layout(&self) -> Option<&StageLayout> {
        self.layout.as_ref()
    }

    pub fn ny(&self) -> usize {
        self.q.ncols()
    }

    pub fn nz(&self) -> usize {
        self.e.nrows()
    }

    /// Rows with `z̲ᵢ = z̄ᵢ`.
    pub fn is_equality_row(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }

    /// `½ yᵀ𝒬y`.
    pub fn objective(&self, y: &[f64]) -> f64 {
        let mut qy = vec![0.0; self.ny()];
        self.q.mul_vec_into(y, &mut qy);
        0.5 * y.iter().zip(&qy).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Nonzeros of `𝒬` and `E` plus nonzero bound entries.
    pub fn data_nonzeros(&self) -> usize {
        self.q.nnz()
            + self.e.nnz()
            + self.lower.iter().filter(|v| **v != 0.0).count()
            + self.upper.iter().filter(|v| **v != 0.0).count()
    }

    /// Re-parameterizes the first row block for a new initial state. Only the
    /// bounds change; requires a stage layout.
    pub fn set_initial_state(&mut self, x0: &[f64]) -> Result<()> {
        let layout = self.layout.as_ref().ok_or_else(|| {
            Error::InvalidInput("initial state update needs an MPC stage layout".into())
        })?;
        check_len("initial state", layout.nx, x0.len())?;
        let shift = layout.x0_map.spmv(x0, false)?;
        let rows = layout.stage_row_block(0);
        for (j, i) in rows.enumerate() {
            self.lower[i] = layout.x0_lower[j] - shift[j];
            self.upper[i] = layout.x0_upper[j] - shift[j];
        }
        Ok(())
    }
}

/// Returns a copy of `qp` whose bounds encode the initial state `x0`.
pub fn update_initial_state(qp: &SparseQP, x0: &[f64]) -> Result<SparseQP> {
    let mut out = qp.clone();
    out.set_initial_state(x0)?;
    Ok(out)
}
