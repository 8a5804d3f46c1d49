//! Patch framing: PCA initial alignment and iterative z-direction alignment.
//!
//! A jet fit is most accurate when the z axis of the patch frame coincides
//! with the true surface normal. [`z_align_iterate`] starts from the PCA frame
//! and repeatedly rotates the patch so that the current estimated normal
//! lands on +z, refitting each time.

use nalgebra::{Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geom::{apply_rotation, rotate_to_z, PatchNeighborhood, Rotation, UnitVector3, Vec3};
use crate::jet::{
    fit_jet, gaussian_weights, irls_refit, uniform_weights, IrlsOptions, JetFit,
};

/// How point weights are chosen for each fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightPolicy {
    Uniform,
    /// Gaussian in distance from the query; `None` uses the median distance.
    Gaussian { bandwidth: Option<f64> },
    Irls(IrlsOptions),
}

impl WeightPolicy {
    /// Fits `patch` under this policy.
    pub fn fit(&self, patch: &PatchNeighborhood, order: usize) -> Result<JetFit> {
        match self {
            WeightPolicy::Uniform => fit_jet(patch, &uniform_weights(patch.len()), order),
            WeightPolicy::Gaussian { bandwidth } => {
                fit_jet(patch, &gaussian_weights(patch, *bandwidth)?, order)
            }
            WeightPolicy::Irls(opts) => Ok(irls_refit(patch, order, opts)?.fit),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignOptions {
    pub order: usize,
    pub tol_deg: f64,
    pub max_iters: usize,
}

impl Default for AlignOptions {
    fn default() -> Self {
        Self { order: 3, tol_deg: 0.5, max_iters: 5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentResult {
    /// Total rotation from the input frame into the final fitting frame.
    pub rotation: Rotation,
    /// Fit performed in the final frame.
    pub fit: JetFit,
    /// Number of fits performed.
    pub iterations: usize,
    /// Angle between the final aligned-frame normal and +z, in degrees.
    pub final_z_angle_deg: f64,
    /// z-angle after every fit, in order.
    pub z_angle_history: Vec<f64>,
    /// True if `max_iters` was reached with the angle still above tolerance.
    pub non_converged: bool,
}

/// Eigen-decomposition of the patch covariance, eigenvalues descending.
fn covariance_eigen(patch: &PatchNeighborhood) -> Result<([f64; 3], [Vec3; 3])> {
    let n = patch.len();
    if n < 3 {
        return Err(Error::DegeneratePatch);
    }
    let pts = patch.local_points();
    let mean = pts.iter().fold(Vec3::zeros(), |a, p| a + p) / n as f64;
    let mut cov = Matrix3::zeros();
    for p in pts {
        let d = p - mean;
        cov += d * d.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let vals = order.map(|i| eig.eigenvalues[i]);
    let vecs = order.map(|i| eig.eigenvectors.column(i).into_owned());
    // Rank < 2: the second eigenvalue vanishes relative to the first.
    if !(vals[0] > 0.0) || vals[1] <= 1e-12 * vals[0] {
        return Err(Error::DegeneratePatch);
    }
    Ok((vals, vecs))
}

/// Rotation taking the smallest-variance direction of the patch to +z.
///
/// Rows of the rotation matrix are the eigenvectors by decreasing eigenvalue.
/// The normal axis keeps a nonnegative z component, and when the two
/// in-plane eigenvalues tie the in-plane basis is the one nearest identity.
pub fn pca_align(patch: &PatchNeighborhood) -> Result<Rotation> {
    let (vals, vecs) = covariance_eigen(patch)?;
    let mut e3 = vecs[2];
    let flip = if e3.z != 0.0 {
        e3.z < 0.0
    } else if e3.y != 0.0 {
        e3.y < 0.0
    } else {
        e3.x < 0.0
    };
    if flip {
        e3 = -e3;
    }
    let e3u = UnitVector3::normalize(e3)?;
    if vals[0] - vals[1] <= 1e-10 * vals[0] {
        return Ok(rotate_to_z(&e3u));
    }
    let e3 = e3u.into_vec();
    // Re-orthogonalize e1 against e3 and pick its sign for the smaller rotation.
    let mut e1 = vecs[0] - e3 * vecs[0].dot(&e3);
    e1.normalize_mut();
    let mut e2 = e3.cross(&e1);
    if e1.x + e2.y < 0.0 {
        e1 = -e1;
        e2 = -e2;
    }
    let m = Matrix3::from_rows(&[e1.transpose(), e2.transpose(), e3.transpose()]);
    Rotation::from_matrix(&m)
}

/// Unoriented PCA normal of the patch.
pub fn pca_normal(patch: &PatchNeighborhood) -> Result<UnitVector3> {
    let r = pca_align(patch)?;
    Ok(r.inverse().apply_unit(&UnitVector3::z_axis()))
}

pub(crate) fn z_angle_deg(n: &UnitVector3) -> f64 {
    n.z().abs().min(1.0).acos().to_degrees()
}

/// Fits in the PCA frame, then alternates rotate-to-estimated-normal and refit
/// until the fitted normal is within `tol_deg` of +z or `max_iters` fits ran.
pub fn z_align_iterate(
    patch: &PatchNeighborhood,
    weighting: &WeightPolicy,
    opts: &AlignOptions,
) -> Result<AlignmentResult> {
    let start = pca_align(patch)?;
    z_align_from(patch, start, weighting, opts)
}

/// [`z_align_iterate`] from a caller-chosen starting rotation.
pub fn z_align_from(
    patch: &PatchNeighborhood,
    start: Rotation,
    weighting: &WeightPolicy,
    opts: &AlignOptions,
) -> Result<AlignmentResult> {
    if opts.max_iters == 0 {
        return Err(Error::InvalidArgument("max_iters must be >= 1".into()));
    }
    let mut rotation = start;
    let mut history = Vec::with_capacity(opts.max_iters);
    loop {
        let framed = apply_rotation(&rotation, patch);
        let fit = weighting.fit(&framed, opts.order)?;
        let angle = z_angle_deg(&fit.normal);
        history.push(angle);
        let done = angle <= opts.tol_deg;
        if done || history.len() >= opts.max_iters {
            return Ok(AlignmentResult {
                rotation,
                iterations: history.len(),
                final_z_angle_deg: angle,
                z_angle_history: history,
                non_converged: !done,
                fit,
            });
        }
        rotation = rotation.then(&rotate_to_z(&fit.normal));
    }
}

/// The final estimated normal expressed in the input frame.
pub fn world_normal(result: &AlignmentResult) -> UnitVector3 {
    result.rotation.inverse().apply_unit(&result.fit.normal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn patch_from(points: Vec<Vec3>) -> PatchNeighborhood {
        let n = points.len();
        PatchNeighborhood::from_local(0, (0..n).collect(), points).unwrap()
    }

    fn angle_deg(a: &UnitVector3, b: &UnitVector3) -> f64 {
        a.dot(b).abs().min(1.0).acos().to_degrees()
    }

    /// Points of the plane through the origin with normal `m`.
    fn plane_patch(m: &UnitVector3, n: usize, seed: u64) -> PatchNeighborhood {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rotate_to_z(m).inverse();
        let mut pts = vec![Vec3::zeros()];
        for _ in 1..n {
            let p = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            pts.push(r.apply(&p));
        }
        patch_from(pts)
    }

    #[test]
    fn pca_planar_patch() {
        let m = UnitVector3::new_normalize(0.3, -0.5, 0.8).unwrap();
        let patch = plane_patch(&m, 40, 1);
        let r = pca_align(&patch).unwrap();
        let rotated = apply_rotation(&r, &patch);
        assert!(rotated.local_points().iter().all(|p| p.z.abs() < 1e-9));
        let img = r.apply(m.as_vec());
        assert!((img.z.abs() - 1.0).abs() < 1e-12);
        assert!(angle_deg(&pca_normal(&patch).unwrap(), &m) < 1e-7);
    }

    #[test]
    fn pca_xy_patch_fixes_z() {
        let patch = plane_patch(&UnitVector3::z_axis(), 30, 2);
        let r = pca_align(&patch).unwrap();
        assert!((r.apply(&Vec3::z()) - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn pca_collinear_is_degenerate() {
        let patch = patch_from(vec![Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0)]);
        assert_eq!(pca_align(&patch), Err(Error::DegeneratePatch));
    }

    #[test]
    fn tilted_plane_converges_in_one_fit() {
        let m = UnitVector3::new_normalize(1.0, 0.0, 1.0).unwrap();
        let patch = plane_patch(&m, 40, 3);
        let res = z_align_iterate(&patch, &WeightPolicy::Uniform, &AlignOptions::default()).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.final_z_angle_deg < 1e-6);
        assert!(angle_deg(&world_normal(&res), &m) < 1e-6);
        assert!(!res.non_converged);
    }

    #[test]
    fn monge_aligned_patch_is_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pts = vec![Vec3::zeros()];
        for _ in 0..40 {
            let (x, y): (f64, f64) = (rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            pts.push(Vec3::new(x, y, 0.4 * x * x - 0.2 * y * y + 0.1 * x * y * y));
        }
        let patch = patch_from(pts);
        let opts = AlignOptions { order: 3, ..Default::default() };
        let res = z_align_from(&patch, Rotation::identity(), &WeightPolicy::Uniform, &opts).unwrap();
        assert_eq!(res.iterations, 1);
        assert!(res.final_z_angle_deg < opts.tol_deg);

        // One more round about an exactly-z normal changes nothing.
        let fit = WeightPolicy::Uniform.fit(&patch, 3).unwrap();
        let r = rotate_to_z(&UnitVector3::z_axis());
        let again = WeightPolicy::Uniform.fit(&apply_rotation(&r, &patch), 3).unwrap();
        assert_eq!(r, Rotation::identity());
        for (a, b) in fit.coefficients.as_slice().iter().zip(again.coefficients.as_slice()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn sphere_z_angle_sequence_non_increasing() {
        let radius = 1.0;
        let h = 0.2 * radius;
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut pts = vec![Vec3::zeros()];
            for _ in 0..40 {
                let rho = h * rng.random::<f64>().sqrt();
                let t = rng.random_range(0.0..std::f64::consts::TAU);
                let (x, y) = (rho * t.cos(), rho * t.sin());
                pts.push(Vec3::new(x, y, radius - (radius * radius - x * x - y * y).sqrt()));
            }
            let axis = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), 0.0);
            let tilt = Rotation::from_axis_angle(&axis, rng.random_range(0.2..1.2)).unwrap();
            let patch = apply_rotation(&tilt, &patch_from(pts));
            let opts = AlignOptions { order: 2, tol_deg: 0.0, max_iters: 5 };
            // Start from the raw frame so the first fit is visibly off-axis.
            let res = z_align_from(&patch, Rotation::identity(), &WeightPolicy::Uniform, &opts).unwrap();
            for w in res.z_angle_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "seed {seed}: {:?}", res.z_angle_history);
            }
            assert!(res.non_converged || res.final_z_angle_deg == 0.0);
        }
    }

    #[test]
    fn planes_recovered_at_any_tilt_up_to_80() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for i in 0..40u64 {
            let tilt = (80.0f64 * i as f64 / 39.0).to_radians();
            let az = rng.random_range(0.0..std::f64::consts::TAU);
            let m = UnitVector3::new_normalize(tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos())
                .unwrap();
            let patch = plane_patch(&m, 30, i);
            for policy in [WeightPolicy::Uniform, WeightPolicy::Gaussian { bandwidth: None }] {
                let res = z_align_iterate(&patch, &policy, &AlignOptions::default()).unwrap();
                assert!(angle_deg(&world_normal(&res), &m) < 1e-6);
            }
        }
    }

    #[test]
    fn world_normal_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = UnitVector3::new_normalize(0.2, 0.7, -0.4).unwrap();
        let patch = plane_patch(&m, 20, 7);
        let fit = WeightPolicy::Uniform.fit(&apply_rotation(&rotate_to_z(&m), &patch), 1).unwrap();
        let res = AlignmentResult {
            rotation: rotate_to_z(&m),
            fit: fit.clone(),
            iterations: 1,
            final_z_angle_deg: 0.0,
            z_angle_history: vec![0.0],
            non_converged: false,
        };
        assert!(angle_deg(&world_normal(&res), &m) < 1e-9);
        // Identity rotation leaves the aligned normal unchanged.
        let id = AlignmentResult { rotation: Rotation::identity(), ..res.clone() };
        assert_eq!(world_normal(&id), fit.normal);
        for _ in 0..50 {
            let axis = Vec3::new(rng.random(), rng.random(), rng.random());
            let r = Rotation::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).unwrap();
            let res = AlignmentResult { rotation: r, ..res.clone() };
            let back = r.apply(world_normal(&res).as_vec());
            assert!((back - fit.normal.as_vec()).norm() < 1e-10);
        }
    }

    #[test]
    fn rigid_motion_covariance_for_polynomial_patch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pts = vec![Vec3::zeros()];
        for _ in 0..60 {
            let (x, y): (f64, f64) = (rng.random_range(-0.25..0.25), rng.random_range(-0.25..0.25));
            pts.push(Vec3::new(x, y, 0.3 * x - 0.1 * y + 0.5 * x * x - 0.3 * x * y + 0.2 * y * y));
        }
        let patch = patch_from(pts);
        let truth = UnitVector3::new_normalize(-0.3, 0.1, 1.0).unwrap();
        let opts = AlignOptions { order: 3, ..Default::default() };
        let base = world_normal(&z_align_iterate(&patch, &WeightPolicy::Uniform, &opts).unwrap());
        // The rotated height function is no longer polynomial, so only
        // truncation-level accuracy against the truth.
        assert!(angle_deg(&base, &truth) < 0.1, "{}", angle_deg(&base, &truth));
        for _ in 0..20 {
            let axis = Vec3::new(rng.random(), rng.random(), rng.random());
            let r = Rotation::from_axis_angle(&axis, rng.random_range(-3.0..3.0)).unwrap();
            let moved = apply_rotation(&r, &patch);
            let n = world_normal(&z_align_iterate(&moved, &WeightPolicy::Uniform, &opts).unwrap());
            let back = r.inverse().apply_unit(&n);
            assert!(angle_deg(&back, &base) < 0.01, "{}", angle_deg(&back, &base));
        }
    }
}
