use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geom::{PatchNeighborhood, Point3, PointCloud, Rotation, UnitVector3, Vec3};

use super::AnalyticSurface;

/// Spatial density of the sampled parameter points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Density {
    Uniform,
    /// Acceptance falls off linearly along +x, from 1 at `x = -h` to 0.1 at `x = h`.
    Gradient,
    /// Points rejected in stripes of width `h/5` repeating every `2h/5` along x.
    Striped,
}

impl Density {
    pub fn name(&self) -> &'static str {
        match self {
            Density::Uniform => "uniform",
            Density::Gradient => "gradient",
            Density::Striped => "striped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    /// Patch radius in the parameter plane.
    pub h: f64,
    /// Total points including the query.
    pub n_points: usize,
    /// Gaussian noise std as a fraction of the patch bounding-box diagonal.
    pub noise_sigma_rel: f64,
    pub density: Density,
    /// Rigid rotation angle applied to the patch, degrees.
    pub tilt_deg: f64,
    pub seed: u64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            h: 0.2,
            n_points: 64,
            noise_sigma_rel: 0.0,
            density: Density::Uniform,
            tilt_deg: 0.0,
            seed: 0,
        }
    }
}

impl SampleSpec {
    fn validate(&self) -> Result<()> {
        if self.n_points < 3 {
            return Err(Error::InvalidArgument("n_points must be >= 3".into()));
        }
        if !(self.noise_sigma_rel >= 0.0) || !self.noise_sigma_rel.is_finite() {
            return Err(Error::InvalidArgument("noise_sigma_rel must be >= 0".into()));
        }
        if !self.tilt_deg.is_finite() {
            return Err(Error::NonFinite("tilt_deg"));
        }
        Ok(())
    }
}

/// Draws a patch around the origin of `surface` and returns it together with
/// the analytic normal at the query point (rotated with the patch).
///
/// Point 0 is the query. The others are drawn in the disk of radius `h`,
/// lifted onto the surface, perturbed along z, re-centered on the (noisy)
/// query and finally rotated by `tilt_deg` about a random horizontal axis.
/// Every random draw comes from `spec.seed`, and the parameter-plane points
/// scale linearly with `h` for a fixed seed.
pub fn sample_patch(
    surface: &AnalyticSurface,
    spec: &SampleSpec,
) -> Result<(PatchNeighborhood, UnitVector3)> {
    spec.validate()?;
    surface.check_window(spec.h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let azimuth: f64 = rng.random_range(0.0..std::f64::consts::TAU);

    let h = spec.h;
    let mut params = Vec::with_capacity(spec.n_points);
    params.push((0.0, 0.0));
    let max_attempts = 100 * spec.n_points;
    let mut attempts = 0;
    while params.len() < spec.n_points {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::SamplingFailed(max_attempts));
        }
        let rho = h * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..std::f64::consts::TAU);
        let (x, y) = (rho * theta.cos(), rho * theta.sin());
        let accept = match spec.density {
            Density::Uniform => true,
            Density::Gradient => {
                let p = 0.1 + 0.9 * (h - x) / (2.0 * h);
                rng.random::<f64>() < p
            }
            Density::Striped => {
                let period = 0.4 * h;
                (x + h).rem_euclid(period) >= 0.2 * h
            }
        };
        if accept {
            params.push((x, y));
        }
    }

    let mut pts: Vec<Vec3> = params.iter().map(|&(x, y)| Vec3::new(x, y, surface.height(x, y))).collect();

    if spec.noise_sigma_rel > 0.0 {
        let diag = bbox_diagonal(&pts);
        let normal = Normal::new(0.0, spec.noise_sigma_rel * diag)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for p in pts.iter_mut() {
            p.z += normal.sample(&mut rng);
        }
        let q = pts[0];
        for p in pts.iter_mut() {
            *p -= q;
        }
    }

    let gt = surface.normal(0.0, 0.0);
    let tilt = Rotation::from_axis_angle(
        &Vec3::new(azimuth.cos(), azimuth.sin(), 0.0),
        spec.tilt_deg.to_radians(),
    )?;
    let pts: Vec<Vec3> = pts.iter().map(|p| tilt.apply(p)).collect();
    let n = pts.len();
    let patch = PatchNeighborhood::from_local(0, (0..n).collect(), pts)?;
    Ok((patch, tilt.apply_unit(&gt)))
}

/// A whole cloud over the square `[-extent, extent]^2` of the parameter
/// plane, with the analytic normal of every noiseless point.
pub fn generate_cloud(
    surface: &AnalyticSurface,
    n_points: usize,
    extent: f64,
    noise_sigma_rel: f64,
    seed: u64,
) -> Result<(PointCloud, Vec<UnitVector3>)> {
    if n_points == 0 {
        return Err(Error::EmptyCloud);
    }
    if !(noise_sigma_rel >= 0.0) || !noise_sigma_rel.is_finite() {
        return Err(Error::InvalidArgument("noise_sigma_rel must be >= 0".into()));
    }
    surface.check_window(extent * std::f64::consts::SQRT_2)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xy: Vec<(f64, f64)> = (0..n_points)
        .map(|_| (rng.random_range(-extent..=extent), rng.random_range(-extent..=extent)))
        .collect();
    let mut pts: Vec<Vec3> = xy.iter().map(|&(x, y)| Vec3::new(x, y, surface.height(x, y))).collect();
    let normals = xy.iter().map(|&(x, y)| surface.normal(x, y)).collect();
    if noise_sigma_rel > 0.0 {
        let normal = Normal::new(0.0, noise_sigma_rel * bbox_diagonal(&pts))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for p in pts.iter_mut() {
            p.z += normal.sample(&mut rng);
        }
    }
    Ok((PointCloud::new(pts.into_iter().map(Point3::from).collect())?, normals))
}

fn bbox_diagonal(pts: &[Vec3]) -> f64 {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (hi - lo).norm()
}
