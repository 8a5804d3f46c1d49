//! Derivatives of the jet solution with respect to the point weights.
//!
//! With `A = M^T W M` and `a = A^{-1} M^T W z`, differentiating in `w_i` gives
//! `da/dw_i = A^{-1} m_i r_i`, where `m_i` is row `i` of `M` and `r_i` the fit
//! residual. `A = R^T R` for the triangular factor of the forward solve, so
//! each column costs two triangular solves.

use nalgebra::{DMatrix, DVector, Matrix3};

use crate::error::{Error, Result};
use crate::geom::PatchNeighborhood;
use crate::jet::{monomial_exponents, monomial_index, n_coeffs, preconditioned_system, JetFit};

#[derive(Debug, Clone, PartialEq)]
pub struct WeightJacobian {
    /// `N_n x N_p`, column `i` is the coefficient derivative in `w_i`.
    pub d_alpha: DMatrix<f64>,
    /// `3 x N_p`, column `i` is the normal derivative in `w_i`.
    pub d_normal: DMatrix<f64>,
}

/// `d alpha / d w` for a fit previously computed on `patch`.
pub fn dalpha_dw(fit: &JetFit, patch: &PatchNeighborhood) -> Result<DMatrix<f64>> {
    let np = patch.len();
    let order = fit.order();
    let nn = n_coeffs(order);
    if fit.residuals.len() != np {
        return Err(Error::LengthMismatch { expected: fit.residuals.len(), got: np });
    }
    let r = fit.r_factor();
    if r.nrows() != nn || r.ncols() != nn || (0..nn).any(|i| r[(i, i)] == 0.0) {
        return Err(Error::RankDeficient { rank: 0, needed: nn });
    }
    let h = fit.precondition_h;
    let (design, _) = preconditioned_system(patch, order, h);
    let rt = r.transpose();
    let unscale: Vec<f64> = monomial_exponents(order)
        .iter()
        .map(|&(px, py)| h.powi(1 - (px + py) as i32))
        .collect();

    let mut out = DMatrix::zeros(nn, np);
    for i in 0..np {
        let ri = fit.residuals[i] / h;
        let rhs: DVector<f64> = design.row(i).transpose() * ri;
        let y = rt
            .solve_lower_triangular(&rhs)
            .ok_or(Error::RankDeficient { rank: 0, needed: nn })?;
        let x = r
            .solve_upper_triangular(&y)
            .ok_or(Error::RankDeficient { rank: 0, needed: nn })?;
        for m in 0..nn {
            out[(m, i)] = x[m] * unscale[m];
        }
    }
    Ok(out)
}

/// `d n / d w`, chained through `u = (-a10, -a01, 1)` and `n = u / |u|`.
pub fn dnormal_dw(fit: &JetFit, patch: &PatchNeighborhood) -> Result<DMatrix<f64>> {
    Ok(normal_from_alpha_jacobian(fit, &dalpha_dw(fit, patch)?))
}

pub fn weight_jacobian(fit: &JetFit, patch: &PatchNeighborhood) -> Result<WeightJacobian> {
    let d_alpha = dalpha_dw(fit, patch)?;
    let d_normal = normal_from_alpha_jacobian(fit, &d_alpha);
    Ok(WeightJacobian { d_alpha, d_normal })
}

fn normal_from_alpha_jacobian(fit: &JetFit, d_alpha: &DMatrix<f64>) -> DMatrix<f64> {
    let c = &fit.coefficients;
    let u = nalgebra::Vector3::new(-c.get(1, 0), -c.get(0, 1), 1.0);
    let un = u.norm();
    let n = u / un;
    let proj = (Matrix3::identity() - n * n.transpose()) / un;
    let (i10, i01) = (monomial_index(1, 0), monomial_index(0, 1));
    let np = d_alpha.ncols();
    let mut out = DMatrix::zeros(3, np);
    for i in 0..np {
        let du = nalgebra::Vector3::new(-d_alpha[(i10, i)], -d_alpha[(i01, i)], 0.0);
        let dn = proj * du;
        out.set_column(i, &dn);
    }
    out
}
