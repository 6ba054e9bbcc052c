//! JSON problem files.
//!
//! A file holds either an MPC problem or a raw QP:
//!
//! ```json
//! {"mpc": {"A": ..., "B": ..., "C": ..., "D": ..., "c": [...], "d": [...],
//!          "Q": ..., "R": ..., "N": 10, "x0": [...], "P": ...}}
//! {"qp":  {"Q_triplets": ..., "E_triplets": ..., "zl": [...], "zu": [...]}}
//! ```
//!
//! Matrices are row-major nested arrays or `{"nrows", "ncols", "triplets"}`.
//! A `null` bound stands for an infinite one. `P` is optional and defaults to
//! the Riccati solution.

use std::path::Path;

use aladin_core::mpc::{assemble_sparse_qp, riccati_solve, MpcProblem};
use aladin_core::{SparseMatrix, SparseQP};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Tolerance used for `P` when a file omits it.
pub const RICCATI_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixData {
    Dense(Vec<Vec<f64>>),
    Triplets(TripletMatrix),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripletMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub triplets: Vec<(usize, usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcFile {
    #[serde(rename = "A")]
    pub a: MatrixData,
    #[serde(rename = "B")]
    pub b: MatrixData,
    #[serde(rename = "C")]
    pub c_state: MatrixData,
    #[serde(rename = "D")]
    pub d_input: MatrixData,
    pub c: Vec<Option<f64>>,
    pub d: Vec<Option<f64>>,
    #[serde(rename = "Q")]
    pub q: MatrixData,
    #[serde(rename = "R")]
    pub r: MatrixData,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<MatrixData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QpFile {
    #[serde(rename = "Q_triplets")]
    pub q: TripletMatrix,
    #[serde(rename = "E_triplets")]
    pub e: TripletMatrix,
    pub zl: Vec<Option<f64>>,
    pub zu: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "lowercase")]
pub enum ProblemFile {
    Mpc(MpcFile),
    Qp(QpFile),
}

/// A parsed problem ready for the solver.
#[derive(Debug, Clone)]
pub enum Problem {
    Mpc(MpcProblem),
    Qp(SparseQP),
}

impl Problem {
    pub fn to_qp(&self) -> Result<SparseQP, CliError> {
        match self {
            Problem::Mpc(p) => Ok(assemble_sparse_qp(p)?),
            Problem::Qp(q) => Ok(q.clone()),
        }
    }
}

impl MatrixData {
    pub fn to_dense(&self) -> Result<DMatrix<f64>, CliError> {
        match self {
            MatrixData::Dense(rows) => {
                let ncols = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != ncols) {
                    return Err(CliError::Input("ragged nested-array matrix".into()));
                }
                Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
            }
            MatrixData::Triplets(t) => Ok(t.to_sparse()?.to_dense()),
        }
    }

    /// Triplet form listing the nonzeros column by column.
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let mut triplets = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                if m[(i, j)] != 0.0 {
                    triplets.push((i, j, m[(i, j)]));
                }
            }
        }
        MatrixData::Triplets(TripletMatrix { nrows: m.nrows(), ncols: m.ncols(), triplets })
    }
}

impl TripletMatrix {
    pub fn to_sparse(&self) -> Result<SparseMatrix, CliError> {
        Ok(SparseMatrix::from_triplets(self.nrows, self.ncols, &self.triplets)?)
    }

    pub fn from_sparse(m: &SparseMatrix) -> Self {
        Self { nrows: m.nrows(), ncols: m.ncols(), triplets: m.triplets().collect() }
    }
}

fn bounds_in(v: &[Option<f64>], missing: f64) -> Vec<f64> {
    v.iter().map(|b| b.unwrap_or(missing)).collect()
}

fn bounds_out(v: &[f64]) -> Vec<Option<f64>> {
    v.iter().map(|b| b.is_finite().then_some(*b)).collect()
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem, CliError> {
        match self {
            ProblemFile::Mpc(f) => {
                let a = f.a.to_dense()?;
                let b = f.b.to_dense()?;
                let q = f.q.to_dense()?;
                let r = f.r.to_dense()?;
                let p = match &f.p {
                    Some(p) => p.to_dense()?,
                    None => riccati_solve(&a, &b, &q, &r, RICCATI_TOL)?,
                };
                let problem = MpcProblem {
                    a,
                    b,
                    c_state: f.c_state.to_dense()?,
                    d_input: f.d_input.to_dense()?,
                    lower: bounds_in(&f.c, f64::NEG_INFINITY),
                    upper: bounds_in(&f.d, f64::INFINITY),
                    q,
                    r,
                    p,
                    horizon: f.horizon,
                    x0: f.x0,
                };
                problem.validate()?;
                Ok(Problem::Mpc(problem))
            }
            ProblemFile::Qp(f) => {
                let qp = SparseQP::new(
                    f.q.to_sparse()?,
                    f.e.to_sparse()?,
                    bounds_in(&f.zl, f64::NEG_INFINITY),
                    bounds_in(&f.zu, f64::INFINITY),
                )?;
                Ok(Problem::Qp(qp))
            }
        }
    }

    pub fn from_problem(p: &Problem) -> Self {
        match p {
            Problem::Mpc(m) => ProblemFile::Mpc(MpcFile {
                a: MatrixData::from_dense(&m.a),
                b: MatrixData::from_dense(&m.b),
                c_state: MatrixData::from_dense(&m.c_state),
                d_input: MatrixData::from_dense(&m.d_input),
                c: bounds_out(&m.lower),
                d: bounds_out(&m.upper),
                q: MatrixData::from_dense(&m.q),
                r: MatrixData::from_dense(&m.r),
                horizon: m.horizon,
                x0: m.x0.clone(),
                p: Some(MatrixData::from_dense(&m.p)),
            }),
            Problem::Qp(q) => ProblemFile::Qp(QpFile {
                q: TripletMatrix::from_sparse(q.q()),
                e: TripletMatrix::from_sparse(q.e()),
                zl: bounds_out(q.lower()),
                zu: bounds_out(q.upper()),
            }),
        }
    }
}

pub fn parse_problem(text: &str) -> Result<Problem, CliError> {
    let file: ProblemFile = serde_json::from_str(text)?;
    file.into_problem()
}

pub fn emit_problem(p: &Problem) -> Result<String, CliError> {
    Ok(serde_json::to_string(&ProblemFile::from_problem(p))?)
}

pub fn read_problem(path: &Path) -> Result<Problem, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_problem(&text)
}
