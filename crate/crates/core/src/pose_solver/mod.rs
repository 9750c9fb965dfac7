//! Robust pose estimation from local-to-world point pairs, and pose error
//! metrics.

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::ensure_same_len;
use crate::geometry::{kabsch_align, rotation_angle_deg, Point3, PointCloud, Se3Pose};
use crate::{seed, Error, Result};

/// Sensor-frame points paired with predicted world coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrespondenceSet {
    local: PointCloud,
    global: Vec<Point3>,
    uncertainty: Vec<f64>,
}

impl CorrespondenceSet {
    pub fn new(local: PointCloud, global: Vec<Point3>, uncertainty: Vec<f64>) -> Result<Self> {
        ensure_same_len("local/global points", local.len(), global.len())?;
        ensure_same_len("points/uncertainties", global.len(), uncertainty.len())?;
        if global.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("global points"));
        }
        if uncertainty.iter().any(|u| !(0.0..=1.0).contains(u)) {
            return Err(Error::InvalidParameter("correspondence uncertainty must lie in [0, 1]".into()));
        }
        Ok(Self {
            local,
            global,
            uncertainty,
        })
    }

    pub fn local(&self) -> &PointCloud {
        &self.local
    }

    pub fn global(&self) -> &[Point3] {
        &self.global
    }

    pub fn uncertainty(&self) -> &[f64] {
        &self.uncertainty
    }

    pub fn len(&self) -> usize {
        self.global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.global.is_empty()
    }
}

/// RANSAC settings. Iteration `i` samples with the generator seeded by
/// `seed::derive(seed, i)`.
///
/// `seed` and `uncertainty_filter` are not read from configuration files: the
/// pipeline derives the seed per frame and sets the filter from its mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RansacConfig {
    pub iterations: usize,
    /// Residual below which a pair supports a hypothesis, in meters.
    pub inlier_threshold: f64,
    pub min_sample: usize,
    #[serde(skip)]
    pub seed: u64,
    /// Pairs with uncertainty above this are dropped before sampling.
    #[serde(skip)]
    pub uncertainty_filter: Option<f64>,
    pub refine_with_inliers: bool,
    /// Refine with weights `1 - uncertainty` instead of uniform weights.
    pub weighted_refinement: bool,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            inlier_threshold: 0.5,
            min_sample: 3,
            seed: 0,
            uncertainty_filter: None,
            refine_with_inliers: true,
            weighted_refinement: false,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("ransac: {m}")));
        if self.iterations == 0 {
            return bad("iterations must be >= 1");
        }
        if !(self.inlier_threshold > 0.0 && self.inlier_threshold.is_finite()) {
            return bad("inlier_threshold must be > 0");
        }
        if self.min_sample < 3 {
            return bad("min_sample must be >= 3");
        }
        if let Some(f) = self.uncertainty_filter {
            if !(0.0..=1.0).contains(&f) {
                return bad("uncertainty_filter must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// The selected pose and the pairs that support it.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Se3Pose,
    /// One entry per input pair; filtered-out pairs are never inliers.
    pub inlier_mask: Vec<bool>,
    pub inlier_count: usize,
    /// Inliers of the best minimal-sample hypothesis, before refinement.
    pub hypothesis_inliers: usize,
    /// Pairs that survived the uncertainty filter.
    pub candidates: usize,
}

fn inlier_mask(pose: &Se3Pose, local: &[Point3], global: &[Point3], threshold: f64) -> Vec<bool> {
    local
        .iter()
        .zip(global)
        .map(|(l, g)| (pose.transform_point(l) - g).norm() < threshold)
        .collect()
}

/// RANSAC over minimal samples, each fitted with Kabsch alignment.
///
/// The hypothesis with the most inliers wins, the lowest iteration on ties.
/// With `refine_with_inliers` the pose is refitted on its inliers and the
/// mask recomputed once. A degenerate inlier set keeps the hypothesis.
pub fn ransac_pose(corr: &CorrespondenceSet, cfg: &RansacConfig) -> Result<PoseEstimate> {
    cfg.validate()?;
    let kept: Vec<usize> = (0..corr.len())
        .filter(|&i| cfg.uncertainty_filter.is_none_or(|f| corr.uncertainty[i] <= f))
        .collect();
    if kept.len() < cfg.min_sample {
        return Err(Error::InsufficientCorrespondences {
            available: kept.len(),
            required: cfg.min_sample,
        });
    }
    let local: Vec<Point3> = kept.iter().map(|&i| corr.local[i]).collect();
    let global: Vec<Point3> = kept.iter().map(|&i| corr.global[i]).collect();
    let weights: Vec<f64> = kept.iter().map(|&i| 1.0 - corr.uncertainty[i]).collect();
    let n = kept.len();

    let hypotheses: Vec<Option<(usize, Se3Pose)>> = (0..cfg.iterations)
        .into_par_iter()
        .map(|it| {
            let mut rng = seed::rng(seed::derive(cfg.seed, it as u64));
            let idx = sample(&mut rng, n, cfg.min_sample).into_vec();
            let src = PointCloud::from_vec_unchecked(idx.iter().map(|&i| local[i]).collect());
            let dst = PointCloud::from_vec_unchecked(idx.iter().map(|&i| global[i]).collect());
            let pose = kabsch_align(&src, &dst, None).ok()?;
            let count = inlier_mask(&pose, &local, &global, cfg.inlier_threshold)
                .iter()
                .filter(|&&b| b)
                .count();
            Some((count, pose))
        })
        .collect();
    let best = hypotheses
        .into_iter()
        .flatten()
        .fold(None::<(usize, Se3Pose)>, |acc, h| match acc {
            Some(a) if a.0 >= h.0 => Some(a),
            _ => Some(h),
        });
    let (hyp_count, mut pose) = best.unwrap_or((0, Se3Pose::identity()));
    if hyp_count < cfg.min_sample {
        return Err(Error::NoConsensus {
            inliers: hyp_count,
            required: cfg.min_sample,
        });
    }
    let mut mask = inlier_mask(&pose, &local, &global, cfg.inlier_threshold);
    let mut count = hyp_count;
    if cfg.refine_with_inliers {
        let members: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        let src = PointCloud::from_vec_unchecked(members.iter().map(|&i| local[i]).collect());
        let dst = PointCloud::from_vec_unchecked(members.iter().map(|&i| global[i]).collect());
        let w: Vec<f64> = members.iter().map(|&i| weights[i]).collect();
        let refit = kabsch_align(&src, &dst, cfg.weighted_refinement.then_some(w.as_slice()));
        if let Ok(refined) = refit {
            pose = refined;
            mask = inlier_mask(&pose, &local, &global, cfg.inlier_threshold);
            count = mask.iter().filter(|&&b| b).count();
        }
    }
    let mut full_mask = vec![false; corr.len()];
    for (k, &i) in kept.iter().enumerate() {
        full_mask[i] = mask[k];
    }
    Ok(PoseEstimate {
        pose,
        inlier_mask: full_mask,
        inlier_count: count,
        hypothesis_inliers: hyp_count,
        candidates: n,
    })
}

/// Translation error in meters and rotation error in degrees.
pub fn evaluate_pose(pred: &Se3Pose, gt: &Se3Pose) -> (f64, f64) {
    let t = (pred.translation() - gt.translation()).norm();
    let r = rotation_angle_deg(&(pred.rotation() * gt.rotation().transpose()));
    (t, r)
}

/// Mean and median of per-frame errors; the median of an even count is the
/// lower middle value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorAggregates {
    pub mean_t: f64,
    pub mean_r: f64,
    pub median_t: f64,
    pub median_r: f64,
}

pub fn aggregate_errors(per_frame: &[(f64, f64)]) -> Result<ErrorAggregates> {
    if per_frame.is_empty() {
        return Err(Error::EmptyInput("per-frame errors"));
    }
    let n = per_frame.len() as f64;
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[(v.len() - 1) / 2]
    };
    let ts: Vec<f64> = per_frame.iter().map(|e| e.0).collect();
    let rs: Vec<f64> = per_frame.iter().map(|e| e.1).collect();
    Ok(ErrorAggregates {
        mean_t: ts.iter().sum::<f64>() / n,
        mean_r: rs.iter().sum::<f64>() / n,
        median_t: median(ts),
        median_r: median(rs),
    })
}
