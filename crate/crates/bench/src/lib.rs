//! Fixtures shared by the criterion benches.

use aladin_core::mpc::{assemble_sparse_qp, build_chain_benchmark, ChainConfig};
use aladin_core::{Result, SparseMatrix, SparseQP};

/// Chain benchmark QP with every state component starting at 2.
pub fn chain_qp(wagons: usize, horizon: usize) -> Result<SparseQP> {
    let x0 = vec![2.0; 2 * wagons];
    assemble_sparse_qp(&build_chain_benchmark(&ChainConfig::with_wagons(wagons), horizon, &x0)?)
}

/// Lower triangle of `[[𝒬 + δI, Eᵀ], [E, −diag(k_inv)]]`, the shape of the
/// consensus system, with pivot signs for each index.
pub fn saddle_matrix(qp: &SparseQP, delta: f64, k_inv: f64) -> Result<(SparseMatrix, Vec<f64>)> {
    let (ny, nz) = (qp.ny(), qp.nz());
    let mut t: Vec<(usize, usize, f64)> = qp.q().triplets().filter(|&(i, j, _)| i >= j).collect();
    t.extend((0..ny).map(|i| (i, i, delta)));
    t.extend(qp.e().triplets().map(|(r, c, v)| (ny + r, c, v)));
    t.extend((0..nz).map(|r| (ny + r, ny + r, -k_inv)));
    let m = SparseMatrix::from_triplets(ny + nz, ny + nz, &t)?;
    let signs = (0..ny + nz).map(|i| if i < ny { 1.0 } else { -1.0 }).collect();
    Ok((m, signs))
}
