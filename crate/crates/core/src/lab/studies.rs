use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::alignment::{pca_normal, z_align_iterate, world_normal, AlignOptions};
use crate::error::{Error, Result};
use crate::estimate::{jet_normal, AlignMode, EstimateConfig, WeightKind};
use crate::geom::{PatchNeighborhood, UnitVector3};
use crate::jet::{fit_jet, monomial_exponents, uniform_weights};

use super::metrics::{angle_error, median_of, MetricsReport, PGP_THRESHOLDS};
use super::{sample_patch, AnalyticSurface, SampleSpec};

/// Errors below this are treated as exact and left out of the slope fit.
pub const NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub h_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub slope_expected: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h,error\n");
        for (h, e) in self.h_values.iter().zip(&self.errors) {
            let _ = writeln!(s, "{h},{e}");
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (h, e) in self.h_values.iter().zip(&self.errors) {
            let _ = writeln!(s, "h = {h:<8} error = {e:.6e}");
        }
        let _ = writeln!(s, "slope = {:.4} (expected {})", self.slope, self.slope_expected);
        s
    }
}

/// Least-squares slope of `log e` against `log h` over errors above the noise
/// floor. `None` when fewer than two such points remain.
pub fn loglog_slope(h_values: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = h_values
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e > NOISE_FLOOR)
        .map(|(h, e)| (h.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn check_h_values(h_values: &[f64]) -> Result<()> {
    if h_values.len() < 2 {
        return Err(Error::InvalidArgument("need at least two h values".into()));
    }
    if h_values.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::InvalidArgument("h values must be positive".into()));
    }
    if h_values.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidArgument("h values must be strictly decreasing".into()));
    }
    Ok(())
}

/// Points per patch used by the convergence studies.
pub const CONVERGENCE_POINTS: usize = 40;

fn study<F>(
    surface: &AnalyticSurface,
    order: usize,
    h_values: &[f64],
    trials: usize,
    seed: u64,
    err: F,
) -> Result<Vec<f64>>
where
    F: Fn(&PatchNeighborhood, &UnitVector3) -> Result<f64> + Sync,
{
    check_h_values(h_values)?;
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    let n_points = CONVERGENCE_POINTS.max(4 * crate::jet::n_coeffs(order));
    h_values
        .iter()
        .map(|&h| {
            let per_trial = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let spec = SampleSpec { h, n_points, seed: seed.wrapping_add(t as u64), ..Default::default() };
                    let (patch, gt) = sample_patch(surface, &spec)?;
                    err(&patch, &gt)
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(per_trial.iter().sum::<f64>() / trials as f64)
        })
        .collect()
}

/// Mean over trials of the largest degree-`k` coefficient error of an
/// order-`order` uniform-weight fit, for each patch radius. Trial `t` uses
/// seed `t` at every radius, so the patches are scaled copies of each other.
pub fn convergence_study(
    surface: &AnalyticSurface,
    order: usize,
    k: usize,
    h_values: &[f64],
    trials: usize,
) -> Result<ConvergenceReport> {
    convergence_study_seeded(surface, order, k, h_values, trials, 0)
}

/// [`convergence_study`] with trial `t` seeded by `seed + t`.
pub fn convergence_study_seeded(
    surface: &AnalyticSurface,
    order: usize,
    k: usize,
    h_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    if k > order {
        return Err(Error::InvalidArgument(format!("coefficient degree {k} exceeds order {order}")));
    }
    let truth = surface.taylor(order)?;
    let exps = monomial_exponents(order);
    let errors = study(surface, order, h_values, trials, seed, |patch, _| {
        let fit = fit_jet(patch, &uniform_weights(patch.len()), order)?;
        Ok(exps
            .iter()
            .enumerate()
            .filter(|(_, &(px, py))| (px + py) as usize == k)
            .map(|(i, _)| (fit.coefficients.as_slice()[i] - truth.as_slice()[i]).abs())
            .fold(0.0, f64::max))
    })?;
    finish(h_values, errors, (order + 1 - k) as f64)
}

/// Like [`convergence_study`] but measures the angle error of the normal.
pub fn normal_convergence_study(
    surface: &AnalyticSurface,
    order: usize,
    h_values: &[f64],
    trials: usize,
) -> Result<ConvergenceReport> {
    normal_convergence_study_seeded(surface, order, h_values, trials, 0)
}

pub fn normal_convergence_study_seeded(
    surface: &AnalyticSurface,
    order: usize,
    h_values: &[f64],
    trials: usize,
    seed: u64,
) -> Result<ConvergenceReport> {
    let errors = study(surface, order, h_values, trials, seed, |patch, gt| {
        let fit = fit_jet(patch, &uniform_weights(patch.len()), order)?;
        Ok(angle_error(&fit.normal, gt))
    })?;
    finish(h_values, errors, order as f64)
}

fn finish(h_values: &[f64], errors: Vec<f64>, slope_expected: f64) -> Result<ConvergenceReport> {
    let slope = loglog_slope(h_values, &errors).ok_or(Error::ExactFit)?;
    Ok(ConvergenceReport { h_values: h_values.to_vec(), errors, slope, slope_expected })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileBin {
    pub lo_deg: f64,
    pub hi_deg: f64,
    pub count: usize,
    /// Mean error of one fit in the input frame; `None` for an empty bin.
    pub unaligned_mean: Option<f64>,
    /// Mean error after z-alignment; `None` for an empty bin.
    pub aligned_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProfile {
    pub bins: Vec<ProfileBin>,
}

impl ErrorProfile {
    pub fn empty_bins(&self) -> Vec<usize> {
        self.bins.iter().enumerate().filter(|(_, b)| b.count == 0).map(|(i, _)| i).collect()
    }

    pub fn unaligned_non_decreasing(&self) -> bool {
        let v: Vec<f64> = self.bins.iter().filter_map(|b| b.unaligned_mean).collect();
        v.windows(2).all(|w| w[1] >= w[0])
    }

    /// Largest over smallest aligned bin mean.
    pub fn aligned_spread(&self) -> f64 {
        let v: Vec<f64> = self.bins.iter().filter_map(|b| b.aligned_mean).collect();
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        max / min
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo_deg,hi_deg,count,unaligned_mean,aligned_mean\n");
        for b in &self.bins {
            let f = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
            let _ = writeln!(s, "{},{},{},{},{}", b.lo_deg, b.hi_deg, b.count, f(b.unaligned_mean), f(b.aligned_mean));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions {
    pub order: usize,
    pub weights: WeightKind,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self { order: 3, weights: WeightKind::Uniform }
    }
}

/// Mean normal error binned by the angle between the true normal and +z.
///
/// Trial `t` samples `template` with seed `template.seed + t` and a tilt drawn
/// uniformly over the span of `bin_edges`. Each patch is fitted once in its
/// input frame and once after z-alignment.
pub fn zangle_error_profile(
    surface: &AnalyticSurface,
    template: &SampleSpec,
    bin_edges: &[f64],
    trials: usize,
    opts: &ProfileOptions,
) -> Result<ErrorProfile> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("bin edges must be strictly increasing".into()));
    }
    if bin_edges[0] < 0.0 || *bin_edges.last().unwrap() > 90.0 {
        return Err(Error::InvalidArgument("bin edges must lie in [0, 90]".into()));
    }
    let (lo, hi) = (bin_edges[0], *bin_edges.last().unwrap());
    let policy = opts.weights.policy();
    let align = AlignOptions { order: opts.order, ..Default::default() };
    let samples = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = template.seed.wrapping_add(t as u64);
            let tilt = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15).random_range(lo..hi);
            let spec = SampleSpec { tilt_deg: tilt, seed, ..*template };
            let (patch, gt) = sample_patch(surface, &spec)?;
            let z_angle = gt.z().abs().min(1.0).acos().to_degrees();
            let raw = policy.fit(&patch, opts.order).map(|f| angle_error(&f.normal, &gt)).ok();
            let aligned = z_align_iterate(&patch, &policy, &align).map(|r| angle_error(&world_normal(&r), &gt)).ok();
            Ok((z_angle, raw, aligned))
        })
        .collect::<Result<Vec<_>>>()?;

    let bins = bin_edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let last = i + 2 == bin_edges.len();
            let inside: Vec<_> =
                samples.iter().filter(|s| s.0 >= w[0] && (s.0 < w[1] || (last && s.0 <= w[1]))).collect();
            let mean = |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            ProfileBin {
                lo_deg: w[0],
                hi_deg: w[1],
                count: inside.len(),
                unaligned_mean: mean(inside.iter().filter_map(|s| s.1).collect()),
                aligned_mean: mean(inside.iter().filter_map(|s| s.2).collect()),
            }
        })
        .collect();
    Ok(ErrorProfile { bins })
}

/// A normal estimator applied to one patch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pipeline {
    Pca,
    Jet { weights: WeightKind, align: AlignMode },
}

impl Pipeline {
    pub fn name(&self) -> String {
        match self {
            Pipeline::Pca => "pca".into(),
            Pipeline::Jet { weights, align } => {
                let frame = match align {
                    AlignMode::None => "raw",
                    AlignMode::Pca => "single",
                    AlignMode::ZIterate => "zalign",
                };
                format!("jet-{}-{}", weights.name(), frame)
            }
        }
    }

    /// PCA plus every weighting in single-pass and z-aligned form.
    pub fn standard_set() -> Vec<Pipeline> {
        let mut v = vec![Pipeline::Pca];
        for weights in [WeightKind::Uniform, WeightKind::Gaussian, WeightKind::Irls] {
            for align in [AlignMode::Pca, AlignMode::ZIterate] {
                v.push(Pipeline::Jet { weights, align });
            }
        }
        v
    }

    pub fn estimate(&self, patch: &PatchNeighborhood, order: usize) -> Result<UnitVector3> {
        match self {
            Pipeline::Pca => pca_normal(patch),
            Pipeline::Jet { weights, align } => {
                jet_normal(patch, &EstimateConfig { order, weights: *weights, align: *align, ..Default::default() })
            }
        }
    }
}

/// A named sampling condition of a comparison grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition {
    pub name: String,
    pub spec: SampleSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub pipeline: String,
    pub surface: String,
    pub condition: String,
    pub trials: usize,
    pub failures: usize,
    /// `None` when every trial failed.
    pub report: Option<MetricsReport>,
    pub median_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("pipeline,surface,condition,trials,failures,rmse_deg,median_deg");
        for a in PGP_THRESHOLDS {
            let _ = write!(s, ",pgp{a}");
        }
        s.push_str(",auc\n");
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{}", r.pipeline, r.surface, r.condition, r.trials, r.failures);
            match (&r.report, r.median_deg) {
                (Some(m), Some(med)) => {
                    let _ = write!(s, ",{},{}", m.rmse_deg, med);
                    for v in m.pgp.values() {
                        let _ = write!(s, ",{v}");
                    }
                    let _ = writeln!(s, ",{}", m.auc);
                }
                _ => {
                    s.push_str(&",nan".repeat(3 + PGP_THRESHOLDS.len()));
                    s.push('\n');
                }
            }
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "{:<22} {:<11} {:<14} {:>6} {:>9} {:>9} {:>7} {:>7} {:>6}\n",
            "pipeline", "surface", "condition", "fail", "rmse", "median", "pgp5", "pgp10", "auc"
        );
        for r in &self.rows {
            let _ = write!(s, "{:<22} {:<11} {:<14} {:>6}", r.pipeline, r.surface, r.condition, r.failures);
            match (&r.report, r.median_deg) {
                (Some(m), Some(med)) => {
                    let _ = writeln!(
                        s,
                        " {:>9.4} {:>9.4} {:>7.3} {:>7.3} {:>6.3}",
                        m.rmse_deg, med, m.pgp[&5], m.pgp[&10], m.auc
                    );
                }
                _ => s.push_str("  (all failed)\n"),
            }
        }
        s
    }
}

/// Runs every pipeline on the same seeded patches for each surface and
/// condition. Trial `t` of a condition uses seed `spec.seed + t`.
pub fn compare_pipelines(
    surfaces: &[AnalyticSurface],
    conditions: &[Condition],
    pipelines: &[Pipeline],
    trials: usize,
    order: usize,
) -> Result<ComparisonTable> {
    if surfaces.is_empty() || conditions.is_empty() || pipelines.is_empty() || trials == 0 {
        return Err(Error::InvalidArgument("comparison grid must be nonempty".into()));
    }
    if let Some(c) = conditions.iter().find(|c| c.name.contains([',', '\n'])) {
        return Err(Error::InvalidArgument(format!("condition name {:?} has a separator", c.name)));
    }
    let mut rows = Vec::new();
    for surface in surfaces {
        for cond in conditions {
            // errors[t][p]
            let errors = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let spec = SampleSpec { seed: cond.spec.seed.wrapping_add(t as u64), ..cond.spec };
                    let (patch, gt) = sample_patch(surface, &spec)?;
                    Ok(pipelines.iter().map(|p| p.estimate(&patch, order).ok().map(|n| angle_error(&n, &gt))).collect())
                })
                .collect::<Result<Vec<Vec<Option<f64>>>>>()?;
            for (p, pipeline) in pipelines.iter().enumerate() {
                let ok: Vec<f64> = errors.iter().filter_map(|e| e[p]).collect();
                let report = if ok.is_empty() { None } else { Some(MetricsReport::from_errors(&ok)?) };
                rows.push(ComparisonRow {
                    pipeline: pipeline.name(),
                    surface: surface.name().into(),
                    condition: cond.name.clone(),
                    trials,
                    failures: trials - ok.len(),
                    median_deg: (!ok.is_empty()).then(|| median_of(&ok)),
                    report,
                });
            }
        }
    }
    Ok(ComparisonTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::JetCoefficients;
    use crate::lab::Density;

    const HS: [f64; 4] = [0.4, 0.2, 0.1, 0.05];

    #[test]
    fn slope_of_exact_power_law() {
        let e: Vec<f64> = HS.iter().map(|h| 3.0 * h * h * h).collect();
        assert!((loglog_slope(&HS, &e).unwrap() - 3.0).abs() < 1e-12);
        // Entries at the floor are ignored.
        let e2 = [e[0], e[1], 0.0, 1e-13];
        assert!((loglog_slope(&HS, &e2).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(loglog_slope(&HS, &[1e-3, 0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn exact_surfaces_report_exact_fit() {
        let plane = AnalyticSurface::Plane { gx: 0.3, gy: 0.1 };
        assert_eq!(convergence_study(&plane, 1, 1, &HS, 3), Err(Error::ExactFit));
        assert_eq!(normal_convergence_study(&plane, 1, &HS, 3), Err(Error::ExactFit));
        let quad = AnalyticSurface::monge_poly(
            JetCoefficients::new(2, vec![0.0, 0.1, 0.2, 0.5, -0.3, 0.4]).unwrap(),
        )
        .unwrap();
        assert_eq!(convergence_study(&quad, 2, 2, &HS, 3), Err(Error::ExactFit));
    }

    #[test]
    fn trig_slopes() {
        let s = AnalyticSurface::sin_cos();
        let r = convergence_study(&s, 2, 1, &HS, 10).unwrap();
        assert!((r.slope - 2.0).abs() <= 0.3, "{r:?}");
        assert_eq!(r.slope_expected, 2.0);
        let r = normal_convergence_study(&s, 3, &HS, 10).unwrap();
        assert!((r.slope - 3.0).abs() <= 0.4, "{r:?}");
    }

    #[test]
    fn h_values_must_decrease() {
        let s = AnalyticSurface::sin_cos();
        assert!(convergence_study(&s, 2, 1, &[0.1, 0.2], 2).is_err());
        assert!(convergence_study(&s, 2, 1, &[0.1], 2).is_err());
        assert!(convergence_study(&s, 2, 3, &HS, 2).is_err());
    }

    #[test]
    fn plane_profile_is_zero() {
        let plane = AnalyticSurface::Plane { gx: 0.0, gy: 0.0 };
        let edges: Vec<f64> = (0..=8).map(|i| i as f64 * 10.0).collect();
        let p = zangle_error_profile(&plane, &SampleSpec::default(), &edges, 60, &ProfileOptions::default()).unwrap();
        for b in &p.bins {
            assert!(b.unaligned_mean.unwrap_or(0.0) < 1e-6);
            assert!(b.aligned_mean.unwrap_or(0.0) < 1e-6);
        }
        assert_eq!(p.bins.iter().map(|b| b.count).sum::<usize>(), 60);
    }

    #[test]
    fn profile_flags_empty_bins() {
        let s = AnalyticSurface::Sphere { radius: 1.0 };
        let p = zangle_error_profile(&s, &SampleSpec::default(), &[0.0, 10.0, 20.0], 5, &ProfileOptions::default())
            .unwrap();
        let total: usize = p.bins.iter().map(|b| b.count).sum();
        assert_eq!(total, 5);
        let sparse =
            zangle_error_profile(&s, &SampleSpec::default(), &[0.0, 0.001, 90.0], 3, &ProfileOptions::default())
                .unwrap();
        assert_eq!(sparse.empty_bins(), vec![0]);
        assert!(zangle_error_profile(&s, &SampleSpec::default(), &[10.0, 5.0], 3, &ProfileOptions::default())
            .is_err());
    }

    fn conditions() -> Vec<Condition> {
        vec![
            Condition { name: "clean".into(), spec: SampleSpec { h: 0.4, tilt_deg: 30.0, ..Default::default() } },
            Condition {
                name: "gradient".into(),
                spec: SampleSpec { h: 0.4, density: Density::Gradient, tilt_deg: 30.0, seed: 100, ..Default::default() },
            },
        ]
    }

    #[test]
    fn jets_exact_on_low_degree_surfaces() {
        // Any rigid motion keeps a plane a plane.
        let plane = AnalyticSurface::Plane { gx: 0.4, gy: -0.7 };
        let t = compare_pipelines(&[plane], &conditions(), &Pipeline::standard_set(), 20, 3).unwrap();
        for r in t.rows.iter().filter(|r| r.pipeline != "pca") {
            assert!(r.report.as_ref().unwrap().rmse_deg < 1e-5, "{r:?}");
        }
        // A tilted cubic graph is not a cubic graph, so only the input frame
        // of an untilted patch is exact.
        let poly = AnalyticSurface::monge_poly(
            JetCoefficients::new(3, vec![0.0, 0.1, 0.2, 0.5, -0.3, 0.4, 0.2, 0.1, -0.2, 0.3]).unwrap(),
        )
        .unwrap();
        let flat = [Condition { name: "flat".into(), spec: SampleSpec { h: 0.4, ..Default::default() } }];
        let raw: Vec<Pipeline> = [WeightKind::Uniform, WeightKind::Gaussian, WeightKind::Irls]
            .into_iter()
            .map(|weights| Pipeline::Jet { weights, align: AlignMode::None })
            .collect();
        let t = compare_pipelines(&[poly], &flat, &raw, 20, 3).unwrap();
        for r in &t.rows {
            assert!(r.report.as_ref().unwrap().rmse_deg < 1e-5, "{r:?}");
        }
    }

    #[test]
    fn pca_loses_to_cubic_jet_on_curved_patch() {
        let t = compare_pipelines(
            &[AnalyticSurface::sin_cos()],
            &conditions()[..1],
            &[Pipeline::Pca, Pipeline::Jet { weights: WeightKind::Uniform, align: AlignMode::ZIterate }],
            30,
            3,
        )
        .unwrap();
        let rmse = |i: usize| t.rows[i].report.as_ref().unwrap().rmse_deg;
        assert!(rmse(0) > rmse(1));
    }

    #[test]
    fn comparison_is_deterministic() {
        let run = || {
            compare_pipelines(&[AnalyticSurface::sin_cos()], &conditions(), &Pipeline::standard_set(), 8, 3)
                .unwrap()
                .to_csv()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.lines().count(), 1 + 2 * 7);
        let cols = a.lines().next().unwrap().split(',').count();
        assert!(a.lines().all(|l| l.split(',').count() == cols));
    }
}
