//! Synthetic ground truth, error metrics and experiment harnesses.

mod metrics;
mod sample;
mod studies;
mod surface;

pub use metrics::{angle_error, auc_curve, pgp, rmse_deg, MetricsReport, AUC_MAX_DEG, PGP_THRESHOLDS};
pub use sample::{generate_cloud, sample_patch, Density, SampleSpec};
pub use studies::{
    compare_pipelines, convergence_study, convergence_study_seeded, loglog_slope, normal_convergence_study,
    normal_convergence_study_seeded, zangle_error_profile,
    ComparisonRow, ComparisonTable, Condition, ConvergenceReport, ErrorProfile, Pipeline, ProfileBin,
    ProfileOptions, CONVERGENCE_POINTS, NOISE_FLOOR,
};
pub use surface::{AnalyticSurface, SurfaceKind};

