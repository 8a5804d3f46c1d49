use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geom::UnitVector3;

/// Unoriented angle between two directions, degrees in `[0, 90]`.
pub fn angle_error(a: &UnitVector3, b: &UnitVector3) -> f64 {
    a.dot(b).abs().min(1.0).acos().to_degrees()
}

pub fn rmse_deg(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    let ms = errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64;
    Ok(ms.sqrt())
}

/// Fraction of errors strictly below `alpha` degrees.
pub fn pgp(errors: &[f64], alpha: f64) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(errors.iter().filter(|&&e| e < alpha).count() as f64 / errors.len() as f64)
}

/// PGP at every whole degree in `(0, max_deg]` and the mean of that curve.
pub fn auc_curve(errors: &[f64], max_deg: f64) -> Result<(Vec<(f64, f64)>, f64)> {
    if errors.is_empty() {
        return Err(Error::EmptyList);
    }
    if !(max_deg >= 1.0) || !max_deg.is_finite() {
        return Err(Error::InvalidArgument(format!("max_deg must be >= 1, got {max_deg}")));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let steps = max_deg.floor() as usize;
    let curve: Vec<(f64, f64)> = (1..=steps)
        .map(|t| {
            let t = t as f64;
            (t, sorted.partition_point(|&e| e < t) as f64 / n)
        })
        .collect();
    let auc = curve.iter().map(|(_, p)| p).sum::<f64>() / steps as f64;
    Ok((curve, auc))
}

/// PGP thresholds reported by default, degrees.
pub const PGP_THRESHOLDS: [u32; 5] = [5, 10, 15, 20, 30];
/// Upper end of the PGP curve used for the AUC, degrees.
pub const AUC_MAX_DEG: f64 = 60.0;

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub rmse_deg: f64,
    pub pgp: BTreeMap<u32, f64>,
    pub auc: f64,
}

impl MetricsReport {
    pub fn from_errors(errors: &[f64]) -> Result<Self> {
        let pgp = PGP_THRESHOLDS
            .iter()
            .map(|&a| Ok((a, pgp(errors, a as f64)?)))
            .collect::<Result<_>>()?;
        Ok(Self { rmse_deg: rmse_deg(errors)?, pgp, auc: auc_curve(errors, AUC_MAX_DEG)?.1 })
    }
}

pub(crate) fn median_of(values: &[f64]) -> f64 {
    crate::jet::median(values.to_vec())
}
