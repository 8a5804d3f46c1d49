//! Weighted least-squares n-jet fitting.
//!
//! A degree-n jet is the polynomial height function
//! `J(x, y) = sum_{k=0..n} sum_{j=0..k} c_{k-j,j} x^(k-j) y^j`.
//! Coefficients are stored degree-major, y-power-minor:
//! `1, x, y, x^2, xy, y^2, x^3, x^2 y, ...`.

mod flatness;
mod weights;

pub use flatness::{flatness_ratio, FlatnessDiagnostic};
pub(crate) use weights::median;
pub use weights::{
    gaussian_weights, irls_refit, median_bandwidth, uniform_weights, IrlsFit, IrlsOptions,
    IrlsStatus,
};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geom::{PatchNeighborhood, UnitVector3, Vec3};

/// Number of coefficients of a degree-`order` jet.
pub fn n_coeffs(order: usize) -> usize {
    (order + 1) * (order + 2) / 2
}

/// `(x power, y power)` for every coefficient slot, in storage order.
pub fn monomial_exponents(order: usize) -> Vec<(u32, u32)> {
    let mut out = Vec::with_capacity(n_coeffs(order));
    for k in 0..=order as u32 {
        for j in 0..=k {
            out.push((k - j, j));
        }
    }
    out
}

/// Storage index of the coefficient of `x^px y^py`.
pub fn monomial_index(px: usize, py: usize) -> usize {
    let k = px + py;
    k * (k + 1) / 2 + py
}

#[derive(Debug, Clone, PartialEq)]
pub struct JetCoefficients {
    order: usize,
    coeffs: Vec<f64>,
}

impl JetCoefficients {
    pub fn new(order: usize, coeffs: Vec<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("jet order must be >= 1".into()));
        }
        if coeffs.len() != n_coeffs(order) {
            return Err(Error::LengthMismatch { expected: n_coeffs(order), got: coeffs.len() });
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("jet coefficient"));
        }
        Ok(Self { order, coeffs })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient of `x^px y^py` (zero above the jet order).
    pub fn get(&self, px: usize, py: usize) -> f64 {
        if px + py > self.order {
            0.0
        } else {
            self.coeffs[monomial_index(px, py)]
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        monomial_exponents(self.order)
            .iter()
            .zip(&self.coeffs)
            .map(|(&(px, py), c)| c * x.powi(px as i32) * y.powi(py as i32))
            .sum()
    }
}

/// Surface normal of the jet at its origin: `(-c10, -c01, 1)` normalized.
pub fn normal_from_jet(c: &JetCoefficients) -> UnitVector3 {
    normal_from_gradient(c.get(1, 0), c.get(0, 1))
}

pub(crate) fn normal_from_gradient(gx: f64, gy: f64) -> UnitVector3 {
    let u = Vec3::new(-gx, -gy, 1.0);
    UnitVector3::normalize(u).expect("norm is at least 1")
}

/// Nonnegative per-point weights (the diagonal of `W`).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if !w.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("weight"));
        }
        if w.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidArgument("weights must be nonnegative".into()));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.0.iter().filter(|&&w| w > 0.0).count()
    }
}

/// Vandermonde design matrix: row `i` holds the monomials of `(x_i, y_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(DMatrix<f64>);

impl DesignMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }
}

pub fn vandermonde(xy: &[(f64, f64)], order: usize) -> Result<DesignMatrix> {
    if order == 0 {
        return Err(Error::InvalidArgument("jet order must be >= 1".into()));
    }
    if xy.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, have: 0 });
    }
    if !xy.iter().all(|(x, y)| x.is_finite() && y.is_finite()) {
        return Err(Error::NonFinite("vandermonde coordinate"));
    }
    Ok(DesignMatrix(vandermonde_unchecked(xy, order)))
}

fn vandermonde_unchecked(xy: &[(f64, f64)], order: usize) -> DMatrix<f64> {
    let nn = n_coeffs(order);
    let mut m = DMatrix::zeros(xy.len(), nn);
    let mut xp = vec![1.0; order + 1];
    let mut yp = vec![1.0; order + 1];
    for (i, &(x, y)) in xy.iter().enumerate() {
        for d in 1..=order {
            xp[d] = xp[d - 1] * x;
            yp[d] = yp[d - 1] * y;
        }
        let mut col = 0;
        for k in 0..=order {
            for j in 0..=k {
                m[(i, col)] = xp[k - j] * yp[j];
                col += 1;
            }
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Divide coordinates by the patch scale before solving.
    pub precondition: bool,
    /// Condition estimates above this flag the fit as ill-conditioned.
    pub condition_cap: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { precondition: true, condition_cap: 1e12 }
    }
}

/// Result of a weighted jet fit, in the patch's (un-preconditioned) units.
#[derive(Debug, Clone, PartialEq)]
pub struct JetFit {
    pub coefficients: JetCoefficients,
    pub normal: UnitVector3,
    /// `z_i - J(x_i, y_i)` for every patch point.
    pub residuals: Vec<f64>,
    pub weights_used: WeightVector,
    /// Ratio of extreme diagonal magnitudes of the triangular factor.
    pub condition_estimate: f64,
    pub precondition_h: f64,
    pub ill_conditioned: bool,
    /// Upper-triangular factor of `sqrt(W) M` in preconditioned coordinates.
    pub(crate) r_factor: DMatrix<f64>,
}

impl JetFit {
    pub fn order(&self) -> usize {
        self.coefficients.order()
    }

    pub fn r_factor(&self) -> &DMatrix<f64> {
        &self.r_factor
    }
}

pub fn fit_jet(patch: &PatchNeighborhood, weights: &WeightVector, order: usize) -> Result<JetFit> {
    fit_jet_with(patch, weights, order, &FitOptions::default())
}

/// Minimizes `sum_i w_i (J(x_i, y_i) - z_i)^2` by Householder QR of the
/// row-scaled system `sqrt(W) M a = sqrt(W) z`.
pub fn fit_jet_with(
    patch: &PatchNeighborhood,
    weights: &WeightVector,
    order: usize,
    opts: &FitOptions,
) -> Result<JetFit> {
    if order == 0 {
        return Err(Error::InvalidArgument("jet order must be >= 1".into()));
    }
    let np = patch.len();
    let nn = n_coeffs(order);
    if weights.len() != np {
        return Err(Error::LengthMismatch { expected: np, got: weights.len() });
    }
    if np < nn {
        return Err(Error::TooFewPoints { needed: nn, have: np });
    }
    let positive = weights.positive_count();
    if positive < nn {
        return Err(Error::RankDeficient { rank: positive, needed: nn });
    }

    let h = if opts.precondition { patch.scale_h() } else { 1.0 };
    let (design, z) = preconditioned_system(patch, order, h);
    let sw: Vec<f64> = weights.as_slice().iter().map(|w| w.sqrt()).collect();
    let mut a = design.clone();
    let mut b = DVector::from_iterator(np, z.iter().copied());
    for i in 0..np {
        a.row_mut(i).scale_mut(sw[i]);
        b[i] *= sw[i];
    }

    let qr = a.qr();
    let r = qr.r();
    let diag: Vec<f64> = (0..nn).map(|i| r[(i, i)].abs()).collect();
    let dmax = diag.iter().copied().fold(0.0, f64::max);
    let dmin = diag.iter().copied().fold(f64::INFINITY, f64::min);
    let rank_tol = dmax * np.max(nn) as f64 * f64::EPSILON;
    let rank = diag.iter().filter(|&&d| d > rank_tol).count();
    if dmax == 0.0 || rank < nn {
        return Err(Error::RankDeficient { rank, needed: nn });
    }
    let qtb = qr.q().transpose() * &b;
    let sol = r
        .solve_upper_triangular(&qtb)
        .ok_or(Error::RankDeficient { rank, needed: nn })?;
    if !sol.iter().all(|c| c.is_finite()) {
        return Err(Error::RankDeficient { rank, needed: nn });
    }

    let resid_pre = &z - &design * &sol;
    let residuals: Vec<f64> = resid_pre.iter().map(|r| r * h).collect();
    let coeffs = rescale_coefficients(sol.as_slice(), order, h);
    let coefficients = JetCoefficients::new(order, coeffs)?;
    let normal = normal_from_jet(&coefficients);
    let condition_estimate = (dmax / dmin).max(1.0);
    Ok(JetFit {
        coefficients,
        normal,
        residuals,
        weights_used: weights.clone(),
        condition_estimate,
        precondition_h: h,
        ill_conditioned: condition_estimate > opts.condition_cap,
        r_factor: r,
    })
}

/// Design matrix and heights of `patch` after dividing coordinates by `h`.
pub(crate) fn preconditioned_system(
    patch: &PatchNeighborhood,
    order: usize,
    h: f64,
) -> (DMatrix<f64>, DVector<f64>) {
    let xy: Vec<(f64, f64)> = patch.local_points().iter().map(|p| (p.x / h, p.y / h)).collect();
    let z = DVector::from_iterator(patch.len(), patch.local_points().iter().map(|p| p.z / h));
    (vandermonde_unchecked(&xy, order), z)
}

/// Coefficient of a degree-k monomial fitted on coordinates scaled by `1/h`
/// equals `h^(1-k)` times the coefficient in original units.
pub(crate) fn rescale_coefficients(pre: &[f64], order: usize, h: f64) -> Vec<f64> {
    monomial_exponents(order)
        .iter()
        .zip(pre)
        .map(|(&(px, py), c)| c * h.powi(1 - (px + py) as i32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn patch_from(points: Vec<Vec3>) -> PatchNeighborhood {
        let n = points.len();
        PatchNeighborhood::from_local(0, (0..n).collect(), points).unwrap()
    }

    /// Query at the origin on the surface plus `n - 1` random points in `[-1, 1]^2`.
    fn surface_patch(n: usize, seed: u64, f: impl Fn(f64, f64) -> f64) -> PatchNeighborhood {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = vec![Vec3::zeros()];
        assert_eq!(f(0.0, 0.0), 0.0);
        for _ in 1..n {
            let x = rng.random_range(-1.0..1.0);
            let y = rng.random_range(-1.0..1.0);
            pts.push(Vec3::new(x, y, f(x, y)));
        }
        patch_from(pts)
    }

    #[test]
    fn vandermonde_rows() {
        let m = vandermonde(&[(0.0, 0.0)], 1).unwrap();
        assert_eq!(m.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0]);
        let m = vandermonde(&[(2.0, 3.0)], 1).unwrap();
        assert_eq!(m.matrix().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 3.0]);
        let m = vandermonde(&[(1.0, 2.0)], 2).unwrap();
        assert_eq!(
            m.matrix().row(0).iter().copied().collect::<Vec<_>>(),
            vec![1.0, 1.0, 2.0, 1.0, 2.0, 4.0]
        );
        assert_eq!(vandermonde(&[(1.0, 2.0)], 3).unwrap().cols(), 10);
        assert!(vandermonde(&[(f64::NAN, 0.0)], 1).is_err());
    }

    #[test]
    fn monomial_index_matches_exponent_table() {
        for order in 1..6 {
            for (i, &(px, py)) in monomial_exponents(order).iter().enumerate() {
                assert_eq!(monomial_index(px as usize, py as usize), i);
            }
            assert_eq!(monomial_exponents(order).len(), n_coeffs(order));
        }
    }

    #[test]
    fn normal_from_jet_examples() {
        let c = |b10: f64, b01: f64| JetCoefficients::new(1, vec![0.0, b10, b01]).unwrap();
        let n = normal_from_jet(&c(0.0, 0.0));
        assert_eq!(n.into_vec(), Vec3::z());
        let n = normal_from_jet(&c(1.0, 0.0));
        assert!((n.into_vec() - Vec3::new(-1.0, 0.0, 1.0) / 2f64.sqrt()).norm() < 1e-15);
        let n = normal_from_jet(&c(3.0, 4.0));
        assert!((n.into_vec() - Vec3::new(-3.0, -4.0, 1.0) / 26f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn plane_fit_exact() {
        let patch = surface_patch(10, 1, |x, y| 2.0 * x + 3.0 * y);
        let fit = fit_jet(&patch, &uniform_weights(10), 1).unwrap();
        let c = fit.coefficients.as_slice();
        for (got, want) in c.iter().zip([0.0, 2.0, 3.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        let want = Vec3::new(-2.0, -3.0, 1.0) / 14f64.sqrt();
        assert!((fit.normal.into_vec() - want).norm() < 1e-9);
        assert!(fit.condition_estimate >= 1.0);
        assert_eq!(fit.residuals.len(), 10);
    }

    #[test]
    fn paraboloid_fit_exact() {
        let patch = surface_patch(12, 2, |x, y| x * x + y * y);
        let fit = fit_jet(&patch, &uniform_weights(12), 2).unwrap();
        for (got, want) in fit.coefficients.as_slice().iter().zip([0.0, 0.0, 0.0, 1.0, 0.0, 1.0]) {
            assert!((got - want).abs() < 1e-8);
        }
    }

    #[test]
    fn too_few_points_and_rank_deficiency() {
        let patch = surface_patch(5, 3, |x, y| x + y);
        assert!(matches!(
            fit_jet(&patch, &uniform_weights(5), 2),
            Err(Error::TooFewPoints { needed: 6, have: 5 })
        ));
        // All points on the line y = x: the 2-D design is rank deficient.
        let pts: Vec<Vec3> = (0..8).map(|i| Vec3::new(i as f64, i as f64, 0.5 * i as f64)).collect();
        let patch = patch_from(pts);
        assert!(matches!(
            fit_jet(&patch, &uniform_weights(8), 1),
            Err(Error::RankDeficient { .. })
        ));
        // Too few positive weights.
        let patch = surface_patch(6, 4, |x, y| x - y);
        let w = WeightVector::new(vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(fit_jet(&patch, &w, 1), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn scale_and_zero_weight_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let patch = surface_patch(20, 5, |x, y| 0.3 * x - 0.2 * y + 0.5 * x * y + 0.1 * x.powi(3));
        let w: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..2.0)).collect();
        let base = fit_jet(&patch, &WeightVector::new(w.clone()).unwrap(), 2).unwrap();
        let scaled: Vec<f64> = w.iter().map(|v| v * 5.0).collect();
        let s = fit_jet(&patch, &WeightVector::new(scaled).unwrap(), 2).unwrap();
        for (a, b) in base.coefficients.as_slice().iter().zip(s.coefficients.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
        let mut wz = w.clone();
        wz[7] = 0.0;
        let zero = fit_jet(&patch, &WeightVector::new(wz.clone()).unwrap(), 2).unwrap();
        wz.remove(7);
        let removed = patch.without_point(7).unwrap();
        let r = fit_jet(&removed, &WeightVector::new(wz).unwrap(), 2).unwrap();
        for (a, b) in zero.coefficients.as_slice().iter().zip(r.coefficients.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn precondition_transparent_on_moderate_scales() {
        for (seed, scale) in [(1u64, 0.5), (2, 1.0), (3, 2.0)] {
            let p = surface_patch(30, seed, |x, y| 0.2 * x + 0.4 * x * x - 0.3 * y * y * y);
            let pts = p.local_points().iter().map(|v| v * scale).collect();
            let p = patch_from(pts);
            let w = uniform_weights(30);
            let on = fit_jet(&p, &w, 3).unwrap();
            let off = fit_jet_with(&p, &w, 3, &FitOptions { precondition: false, ..Default::default() })
                .unwrap();
            let ang = on.normal.dot(&off.normal).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(ang < 1e-6);
        }
    }

    #[test]
    fn ill_conditioned_is_flagged_not_fatal() {
        let p = surface_patch(30, 8, |x, y| x * y);
        let opts = FitOptions { condition_cap: 1.0, ..Default::default() };
        let fit = fit_jet_with(&p, &uniform_weights(30), 3, &opts).unwrap();
        assert!(fit.ill_conditioned);
        let fit = fit_jet(&p, &uniform_weights(30), 3).unwrap();
        assert!(!fit.ill_conditioned);
    }

    #[test]
    fn objective_beats_grid_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut pts = vec![Vec3::zeros()];
        for _ in 1..20 {
            let x: f64 = rng.random_range(-1.0..1.0);
            let y: f64 = rng.random_range(-1.0..1.0);
            pts.push(Vec3::new(x, y, 0.4 * x - 0.7 * y + 0.3 * x * y + rng.random_range(-0.1..0.1)));
        }
        let patch = patch_from(pts);
        let w: Vec<f64> = (0..20).map(|_| rng.random_range(0.2..1.0)).collect();
        let fit = fit_jet(&patch, &WeightVector::new(w.clone()).unwrap(), 1).unwrap();
        let objective = |c: [f64; 3]| -> f64 {
            patch
                .local_points()
                .iter()
                .zip(&w)
                .map(|(p, wi)| wi * (c[0] + c[1] * p.x + c[2] * p.y - p.z).powi(2))
                .sum()
        };
        let a = fit.coefficients.as_slice();
        let best = objective([a[0], a[1], a[2]]);
        let steps = 50;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let t = |s: usize| -0.5 + s as f64 / (steps - 1) as f64;
                    let c = [a[0] + t(i), a[1] + t(j), a[2] + t(k)];
                    assert!(best <= objective(c) + 1e-12);
                }
            }
        }
    }
}
