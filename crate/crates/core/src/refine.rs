//! Residual normal correction and the training loss terms.

use crate::error::{Error, Result};
use crate::geom::{Rotation, UnitVector3, Vec3};

/// Below this norm `rough + delta` has no usable direction.
const SUM_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTerm(Vec3);

impl ResidualTerm {
    pub fn new(delta: Vec3) -> Result<Self> {
        if !delta.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("residual term"));
        }
        Ok(Self(delta))
    }

    pub fn zero() -> Self {
        Self(Vec3::zeros())
    }

    pub fn as_vec(&self) -> &Vec3 {
        &self.0
    }
}

/// Refined normal: `rough + delta`, renormalized.
pub fn apply_residual(rough: &UnitVector3, delta: &ResidualTerm) -> Result<UnitVector3> {
    let sum = rough.as_vec() + delta.as_vec();
    if sum.norm() < SUM_FLOOR {
        return Err(Error::DegenerateSum);
    }
    UnitVector3::normalize(sum)
}

/// The residual a perfect predictor would output: `gt - rough`.
pub fn oracle_residual(gt: &UnitVector3, rough: &UnitVector3) -> Result<ResidualTerm> {
    let delta = gt.as_vec() - rough.as_vec();
    // Antipodal pairs are rejected: the sum degenerates at the midpoint.
    if (gt.as_vec() + rough.as_vec()).norm() < SUM_FLOOR {
        return Err(Error::Antipodal);
    }
    ResidualTerm::new(delta)
}

/// `|a x b|`, the sine of the angle between two unit vectors.
pub fn sin_loss(gt: &UnitVector3, est: &UnitVector3) -> f64 {
    gt.as_vec().cross(est.as_vec()).norm().min(1.0)
}

pub fn normal_loss(gt: &UnitVector3, rough: &UnitVector3, refined: &UnitVector3) -> f64 {
    sin_loss(gt, rough) + sin_loss(gt, refined)
}

/// `|T(gt) x z|`: how far the transform leaves the true normal from +z.
pub fn trans_loss(gt: &UnitVector3, t: &Rotation) -> f64 {
    sin_loss(&t.apply_unit(gt), &UnitVector3::z_axis())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { lambda1: 0.25, lambda2: 0.1, lambda3: 2.0 }
    }
}

impl LossWeights {
    pub fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Result<Self> {
        for v in [lambda1, lambda2, lambda3] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!("loss weight must be >= 0, got {v}")));
            }
        }
        Ok(Self { lambda1, lambda2, lambda3 })
    }
}

/// Component losses. `l_con` and `l_reg` are supplied by the caller.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub l_normal: f64,
    pub l_con: f64,
    pub l_reg: f64,
    pub l_trans: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l_normal: f64,
    pub l_con: f64,
    pub l_reg: f64,
    pub l_trans: f64,
    pub l_total: f64,
}

pub fn total_loss(parts: &LossParts, lw: &LossWeights) -> Result<LossBreakdown> {
    let named = [
        ("l_normal", parts.l_normal),
        ("l_con", parts.l_con),
        ("l_reg", parts.l_reg),
        ("l_trans", parts.l_trans),
    ];
    for (name, v) in named {
        if v.is_nan() || v < 0.0 {
            return Err(Error::NegativeLoss(name));
        }
    }
    let l_total = parts.l_normal
        + lw.lambda1 * parts.l_con
        + lw.lambda2 * parts.l_reg
        + lw.lambda3 * parts.l_trans;
    Ok(LossBreakdown {
        l_normal: parts.l_normal,
        l_con: parts.l_con,
        l_reg: parts.l_reg,
        l_trans: parts.l_trans,
        l_total,
    })
}
