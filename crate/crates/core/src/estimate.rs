//! Per-patch and whole-cloud normal estimation pipelines.

use rayon::prelude::*;

use crate::alignment::{pca_align, pca_normal, z_align_from, world_normal, AlignOptions, WeightPolicy};
use crate::error::{Error, Result};
use crate::geom::{apply_rotation, knn_patch_with_tree, KdTree, PatchNeighborhood, PointCloud, UnitVector3};
use crate::jet::IrlsOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Uniform,
    Gaussian,
    Irls,
}

impl WeightKind {
    pub fn name(&self) -> &'static str {
        match self {
            WeightKind::Uniform => "uniform",
            WeightKind::Gaussian => "gaussian",
            WeightKind::Irls => "irls",
        }
    }

    pub fn policy(&self) -> WeightPolicy {
        match self {
            WeightKind::Uniform => WeightPolicy::Uniform,
            WeightKind::Gaussian => WeightPolicy::Gaussian { bandwidth: None },
            WeightKind::Irls => WeightPolicy::Irls(IrlsOptions::default()),
        }
    }
}

/// Frame in which the jet is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    /// The input frame as is.
    None,
    /// One fit in the PCA frame.
    Pca,
    /// PCA frame, then rotate-to-estimate and refit until aligned.
    ZIterate,
}

impl AlignMode {
    pub fn name(&self) -> &'static str {
        match self {
            AlignMode::None => "none",
            AlignMode::Pca => "pca",
            AlignMode::ZIterate => "z-iterate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateConfig {
    pub order: usize,
    pub weights: WeightKind,
    pub align: AlignMode,
    pub tol_deg: f64,
    pub max_iters: usize,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        let a = AlignOptions::default();
        Self {
            order: a.order,
            weights: WeightKind::Uniform,
            align: AlignMode::ZIterate,
            tol_deg: a.tol_deg,
            max_iters: a.max_iters,
        }
    }
}

/// Jet normal of the patch's query point, expressed in the patch frame.
pub fn jet_normal(patch: &PatchNeighborhood, cfg: &EstimateConfig) -> Result<UnitVector3> {
    let policy = cfg.weights.policy();
    match cfg.align {
        AlignMode::None => Ok(policy.fit(patch, cfg.order)?.normal),
        AlignMode::Pca => {
            let r = pca_align(patch)?;
            let fit = policy.fit(&apply_rotation(&r, patch), cfg.order)?;
            Ok(r.inverse().apply_unit(&fit.normal))
        }
        AlignMode::ZIterate => {
            let opts = AlignOptions { order: cfg.order, tol_deg: cfg.tol_deg, max_iters: cfg.max_iters };
            let res = z_align_from(patch, pca_align(patch)?, &policy, &opts)?;
            Ok(world_normal(&res))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudEstimate {
    pub normals: Vec<UnitVector3>,
    /// Indices whose jet fit failed and fell back to the PCA normal.
    pub fallbacks: Vec<usize>,
}

/// Estimates one normal per cloud point from its `k` nearest neighbors.
///
/// Points whose jet fit fails get the PCA normal of the patch instead, or +z
/// when even PCA is degenerate. Results do not depend on the thread count.
pub fn estimate_cloud(cloud: &PointCloud, k: usize, cfg: &EstimateConfig) -> Result<CloudEstimate> {
    if k == 0 {
        return Err(Error::KZero);
    }
    if k > cloud.len() {
        return Err(Error::KTooLarge { k, size: cloud.len() });
    }
    let tree = KdTree::build(cloud.points());
    let results: Vec<(UnitVector3, bool)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| {
            let patch = knn_patch_with_tree(cloud, &tree, i, k)?;
            Ok(match jet_normal(&patch, cfg) {
                Ok(n) => (n, false),
                Err(_) => (pca_normal(&patch).unwrap_or_else(|_| UnitVector3::z_axis()), true),
            })
        })
        .collect::<Result<_>>()?;
    let fallbacks = results.iter().enumerate().filter(|(_, r)| r.1).map(|(i, _)| i).collect();
    Ok(CloudEstimate { normals: results.into_iter().map(|r| r.0).collect(), fallbacks })
}
