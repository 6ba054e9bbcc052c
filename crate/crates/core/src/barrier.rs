//! Relaxed log-barrier `φ(r, t, ξ) = −log(r − ξ)/t` and the diagonal curvature
//! it induces on the box constraints.
//!
//! The barrier is never minimized; it only supplies the scaling matrix `K` of
//! the consensus step.

use crate::error::{check_len, Error, Result};
use crate::sparse::norm_inf;

pub const R_MIN: f64 = 1e-12;
pub const T_MAX: f64 = 1e12;
pub const K_MIN: f64 = 1e-8;
pub const K_MAX: f64 = 1e12;
/// Floor applied to the residual maximum before inverting it.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    /// Relaxation margin `r`.
    pub r: f64,
    /// Barrier weight `t`.
    pub t: f64,
}

impl BarrierParams {
    pub fn new(r: f64, t: f64) -> Result<Self> {
        if !(r >= R_MIN) || !(t > 0.0 && t <= T_MAX) {
            return Err(Error::InvalidInput(format!(
                "barrier parameters out of range: r = {r}, t = {t}"
            )));
        }
        Ok(Self { r, t })
    }
}

pub fn phi(r: f64, t: f64, xi: f64) -> Result<f64> {
    if !(xi < r) {
        return Err(Error::Domain { index: 0 });
    }
    Ok(-(r - xi).ln() / t)
}

/// `∂φ/∂ξ = 1/(t (r − ξ))`.
pub fn phi_derivative(r: f64, t: f64, xi: f64) -> f64 {
    1.0 / (t * (r - xi))
}

/// Gradient of `Φ(r, t, z) = Σᵢ φ(z̲ᵢ − zᵢ) + φ(zᵢ − z̄ᵢ)`; infinite bounds drop their term.
pub fn barrier_gradient(params: BarrierParams, z: &[f64], lower: &[f64], upper: &[f64]) -> Vec<f64> {
    let BarrierParams { r, t } = params;
    z.iter()
        .zip(lower.iter().zip(upper))
        .map(|(&zi, (&l, &u))| {
            let mut g = 0.0;
            if l.is_finite() {
                g -= phi_derivative(r, t, l - zi);
            }
            if u.is_finite() {
                g += phi_derivative(r, t, zi - u);
            }
            g
        })
        .collect()
}

/// Diagonal of `K = ∇²Φ(r, t, z)`, clamped to `[K_MIN, K_MAX]`.
pub fn barrier_hessian_diag(
    params: BarrierParams,
    z: &[f64],
    lower: &[f64],
    upper: &[f64],
) -> Result<Vec<f64>> {
    check_len("barrier lower bounds", z.len(), lower.len())?;
    check_len("barrier upper bounds", z.len(), upper.len())?;
    let mut k = vec![0.0; z.len()];
    barrier_hessian_diag_into(params, z, lower, upper, K_MAX, &mut k)?;
    Ok(k)
}

pub(crate) fn barrier_hessian_diag_into(
    params: BarrierParams,
    z: &[f64],
    lower: &[f64],
    upper: &[f64],
    k_max: f64,
    out: &mut [f64],
) -> Result<()> {
    let BarrierParams { r, t } = params;
    for i in 0..z.len() {
        let mut kii = 0.0;
        if lower[i].is_finite() {
            let gap = r - (lower[i] - z[i]);
            if !(gap > 0.0) {
                return Err(Error::Domain { index: i });
            }
            kii += 1.0 / (gap * gap);
        }
        if upper[i].is_finite() {
            let gap = r - (z[i] - upper[i]);
            if !(gap > 0.0) {
                return Err(Error::Domain { index: i });
            }
            kii += 1.0 / (gap * gap);
        }
        out[i] = (kii / t).clamp(K_MIN, k_max);
    }
    Ok(())
}

/// Barrier parameters from the current residuals: `r = 1.1‖w − z‖∞` and `t`
/// the inverse of the larger of the primal and dual residual, both guarded.
pub fn step9b_params(primal_residual: f64, dual_residual: f64) -> BarrierParams {
    let r = (1.1 * primal_residual).max(R_MIN);
    let t = (1.0 / primal_residual.max(dual_residual).max(RESIDUAL_FLOOR)).min(T_MAX);
    BarrierParams { r, t }
}

/// [`step9b_params`] evaluated from raw vectors: `w`, `z` and `𝒬y + σ`.
pub fn step9b_params_from(w: &[f64], z: &[f64], qy_plus_sigma: &[f64]) -> BarrierParams {
    let primal = w.iter().zip(z).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    step9b_params(primal, norm_inf(qy_plus_sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn phi_values() {
        assert_eq!(phi(1.0, 1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(phi(1.0, 1.0, 0.5).unwrap(), 0.693_147_180_559_945_3, max_relative = 1e-15);
        assert_relative_eq!(phi(1.0, 2.0, 0.5).unwrap(), 0.346_573_590_279_972_6, max_relative = 1e-15);
        assert!(phi(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn hessian_examples() {
        let p = BarrierParams::new(1.0, 1.0).unwrap();
        assert_eq!(barrier_hessian_diag(p, &[0.0], &[-1.0], &[1.0]).unwrap(), vec![0.5]);
        let p4 = BarrierParams::new(1.0, 4.0).unwrap();
        assert_eq!(barrier_hessian_diag(p4, &[0.0], &[-1.0], &[1.0]).unwrap(), vec![0.125]);
        assert_eq!(barrier_hessian_diag(p, &[0.0], &[0.0], &[0.0]).unwrap(), vec![2.0]);
    }

    #[test]
    fn hessian_domain_error_reports_index() {
        let p = BarrierParams::new(0.1, 1.0).unwrap();
        let err = barrier_hessian_diag(p, &[0.0, 2.0], &[-1.0, -1.0], &[1.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::Domain { index: 1 });
    }

    #[test]
    fn hessian_is_clamped() {
        let p = BarrierParams::new(R_MIN, T_MAX).unwrap();
        let k = barrier_hessian_diag(p, &[0.0, 0.0], &[0.0, -1.0], &[0.0, 1.0]).unwrap();
        assert_eq!(k, vec![K_MAX, K_MIN]);
    }

    #[test]
    fn one_sided_bounds_drop_a_term() {
        let p = BarrierParams::new(1.0, 1.0).unwrap();
        let k = barrier_hessian_diag(p, &[0.0], &[-1.0], &[f64::INFINITY]).unwrap();
        assert_eq!(k, vec![0.25]);
        let k = barrier_hessian_diag(p, &[0.0], &[f64::NEG_INFINITY], &[f64::INFINITY]).unwrap();
        assert_eq!(k, vec![K_MIN]);
    }

    #[test]
    fn parameter_rule() {
        let p = step9b_params(0.2, 0.1);
        assert_relative_eq!(p.r, 0.22, max_relative = 1e-15);
        assert_relative_eq!(p.t, 5.0, max_relative = 1e-15);
        assert_eq!(step9b_params(0.0, 0.0), BarrierParams { r: R_MIN, t: T_MAX });
        let p = step9b_params(1.0, 10.0);
        assert_relative_eq!(p.r, 1.1, max_relative = 1e-15);
        assert_relative_eq!(p.t, 0.1, max_relative = 1e-15);
        let p = step9b_params_from(&[0.5, 0.0], &[0.3, 0.0], &[-0.1]);
        assert_relative_eq!(p.r, 0.22, max_relative = 1e-12);
        assert_relative_eq!(p.t, 5.0, max_relative = 1e-12);
    }

    #[test]
    fn params_validation() {
        assert!(BarrierParams::new(0.0, 1.0).is_err());
        assert!(BarrierParams::new(1.0, 0.0).is_err());
        assert!(BarrierParams::new(1.0, 2e12).is_err());
    }
}
