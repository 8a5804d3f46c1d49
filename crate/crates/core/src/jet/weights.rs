use crate::error::{Error, Result};
use crate::geom::PatchNeighborhood;

use super::{fit_jet, JetFit, WeightVector};

pub fn uniform_weights(n_p: usize) -> WeightVector {
    WeightVector(vec![1.0; n_p])
}

/// Median of the nonzero distances from the query; 1 if there are none.
pub fn median_bandwidth(patch: &PatchNeighborhood) -> f64 {
    let d: Vec<f64> = patch
        .local_points()
        .iter()
        .map(|p| p.norm())
        .filter(|&d| d > 0.0)
        .collect();
    if d.is_empty() {
        1.0
    } else {
        median(d)
    }
}

/// `w_i = exp(-d_i^2 / bandwidth^2)`, `d_i` the distance to the query.
/// Without an explicit bandwidth the [`median_bandwidth`] is used.
pub fn gaussian_weights(patch: &PatchNeighborhood, bandwidth: Option<f64>) -> Result<WeightVector> {
    let bw = match bandwidth {
        Some(b) if b > 0.0 && b.is_finite() => b,
        Some(b) => return Err(Error::InvalidArgument(format!("bandwidth must be > 0, got {b}"))),
        None => median_bandwidth(patch),
    };
    let inv = 1.0 / (bw * bw);
    Ok(WeightVector(
        patch.local_points().iter().map(|p| (-p.norm_squared() * inv).exp()).collect(),
    ))
}

pub(crate) fn median(mut v: Vec<f64>) -> f64 {
    debug_assert!(!v.is_empty());
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Consistency constant of the MAD scale estimate for Gaussian residuals.
const MAD_SCALE: f64 = 1.4826;
const COEFF_TOL: f64 = 1e-8;
const SCALE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsOptions {
    pub max_iters: usize,
    pub tuning_c: f64,
}

impl Default for IrlsOptions {
    fn default() -> Self {
        Self { max_iters: 10, tuning_c: 2.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrlsStatus {
    Converged,
    MaxIters,
    /// Residual scale collapsed (the current fit is exact); iteration stopped.
    DegenerateScale,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub fit: JetFit,
    /// Number of weighted solves performed.
    pub iterations: usize,
    pub status: IrlsStatus,
}

/// Welsch-kernel iteratively reweighted jet fit, starting from uniform weights.
///
/// Each round sets `w_i = exp(-(r_i / (c s))^2)` with `s = 1.4826 median|r_i|`
/// from the previous fit.
pub fn irls_refit(patch: &PatchNeighborhood, order: usize, opts: &IrlsOptions) -> Result<IrlsFit> {
    if !(opts.tuning_c > 0.0) || !opts.tuning_c.is_finite() {
        return Err(Error::InvalidArgument("tuning_c must be > 0".into()));
    }
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let mut fit = fit_jet(patch, &uniform_weights(patch.len()), order)?;
    let mut iterations = 1;
    // Absolute floor for unit-scale patches, relative to the patch radius beyond.
    let floor = SCALE_FLOOR * patch.scale_h().max(1.0);
    loop {
        let med = median(fit.residuals.iter().map(|r| r.abs()).collect());
        if med < floor {
            return Ok(IrlsFit { fit, iterations, status: IrlsStatus::DegenerateScale });
        }
        if iterations >= opts.max_iters {
            return Ok(IrlsFit { fit, iterations, status: IrlsStatus::MaxIters });
        }
        let cs = opts.tuning_c * MAD_SCALE * med;
        let w: Vec<f64> = fit.residuals.iter().map(|r| (-(r / cs).powi(2)).exp()).collect();
        let next = fit_jet(patch, &WeightVector(w), order)?;
        iterations += 1;
        let old = fit.coefficients.as_slice();
        let new = next.coefficients.as_slice();
        let delta = old.iter().zip(new).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let size = old.iter().map(|a| a.abs()).fold(0.0, f64::max);
        fit = next;
        if delta <= COEFF_TOL * size.max(f64::MIN_POSITIVE) {
            return Ok(IrlsFit { fit, iterations, status: IrlsStatus::Converged });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use crate::jet::tests::patch_from;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dists_patch(d: &[f64]) -> PatchNeighborhood {
        let mut pts = vec![Vec3::zeros()];
        pts.extend(d.iter().map(|&x| Vec3::new(x, 0.0, 0.0)));
        patch_from(pts)
    }

    #[test]
    fn uniform_is_all_ones() {
        assert_eq!(uniform_weights(3).as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gaussian_values() {
        let p = dists_patch(&[1.0, 2.0, 3.0]);
        assert_eq!(median_bandwidth(&p), 2.0);
        let w = gaussian_weights(&p, Some(2.0)).unwrap();
        assert_eq!(w.as_slice()[0], 1.0);
        assert!((w.as_slice()[2] - (-1.0f64).exp()).abs() < 1e-15);
        assert!((w.as_slice()[2] - 0.367879).abs() < 1e-6);
        assert_eq!(gaussian_weights(&p, None).unwrap(), w);
        assert!(gaussian_weights(&p, Some(0.0)).is_err());
    }

    #[test]
    fn noiseless_polynomial_stops_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pts = vec![Vec3::zeros()];
        for _ in 0..30 {
            let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            pts.push(Vec3::new(x, y, 0.5 * x * x - 0.2 * x * y + 0.1 * y));
        }
        let p = patch_from(pts);
        let out = irls_refit(&p, 2, &IrlsOptions::default()).unwrap();
        assert_eq!(out.status, IrlsStatus::DegenerateScale);
        assert_eq!(out.iterations, 1);
        let uni = fit_jet(&p, &uniform_weights(p.len()), 2).unwrap();
        assert_eq!(out.fit, uni);
    }

    #[test]
    fn single_gross_outlier_is_suppressed() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = Vec3::new(-0.3, 0.5, 1.0).normalize();
        let mut pts = vec![Vec3::zeros()];
        for _ in 0..40 {
            let (x, y): (f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let noise = 1e-3 * rng.random_range(-1.0..1.0);
            pts.push(Vec3::new(x, y, 0.3 * x - 0.5 * y + noise));
        }
        let outlier = 17;
        let h = patch_from(pts.clone()).scale_h();
        pts[outlier].z += 50.0 * h;
        let p = patch_from(pts);
        let out = irls_refit(&p, 1, &IrlsOptions::default()).unwrap();
        assert!(out.fit.weights_used.as_slice()[outlier] < 0.01);
        let err = |n: &crate::geom::UnitVector3| n.as_vec().dot(&truth).abs().min(1.0).acos();
        let uni = fit_jet(&p, &uniform_weights(p.len()), 1).unwrap();
        assert!(err(&out.fit.normal) < err(&uni.normal));
        // Oracle: the fit with the outlier removed by hand.
        let clean = p.without_point(outlier).unwrap();
        let manual = fit_jet(&clean, &uniform_weights(clean.len()), 1).unwrap();
        let gap = out.fit.normal.dot(&manual.normal).min(1.0).acos();
        assert!(gap < 1e-3, "gap {gap}");
    }

    #[test]
    fn rejects_bad_options() {
        let p = dists_patch(&[1.0, 2.0, 3.0]);
        assert!(irls_refit(&p, 1, &IrlsOptions { max_iters: 0, tuning_c: 2.0 }).is_err());
        assert!(irls_refit(&p, 1, &IrlsOptions { max_iters: 3, tuning_c: -1.0 }).is_err());
    }
}
