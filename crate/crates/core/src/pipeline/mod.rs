//! Frame-by-frame relocalization: coordinate prediction, optional prior
//! propagation and fusion, then robust pose estimation.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::gce::{CoordRole, CoordinatePredictor, NoiseModel, SyntheticPredictor, TauSchedule, UncertainCoords};
use crate::geometry::{centroid_of, voxel_groups, Point3, PointCloud, Se3Pose};
use crate::pcg::{
    contextualize, cross_attention_with_temperature, embed_features, extract_features, global_attention,
    pcg_losses, propagate_coordinates, self_attention_with_temperature, soft_correspondences, EmbeddingConfig,
    FeatureMatrix, PropagationParams, SoftCorrespondences,
};
use crate::pose_solver::{
    aggregate_errors, evaluate_pose, ransac_pose, CorrespondenceSet, ErrorAggregates, PoseEstimate, RansacConfig,
};
use crate::simulator::ScanFrame;
use crate::ucf::{fuse, fusion_weights, loss_full, loss_fuse, LossWeights};
use crate::{seed, Error, Result};

/// Which stages run on frames after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Measured coordinates straight into RANSAC.
    MeasurementOnly,
    /// Measured coordinates with the uncertainty filter.
    MeasurementConf,
    /// Prior propagation and fusion, then the uncertainty filter.
    Full,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::MeasurementOnly, Mode::MeasurementConf, Mode::Full];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::MeasurementOnly => "measurement_only",
            Mode::MeasurementConf => "measurement_conf",
            Mode::Full => "full",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode `{s}`")))
    }
}

/// Which previous-frame coordinates seed the prior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    Fused,
    Measurement,
}

/// Where measured coordinates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Ground truth corrupted by the configured noise model.
    Synthetic,
    /// A prediction file supplied by the caller.
    File,
}

/// Descriptor source for the attention stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    Geometric,
    Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub voxel_size: f64,
    pub k_neighbors: usize,
    pub feature_radii: Vec<f64>,
    pub backbone: Backbone,
    pub embedding: EmbeddingConfig,
    /// Softmax temperature of every attention stage.
    pub attention_temperature: f64,
    /// Weight of the mean neighbor distance in the prior uncertainty.
    pub gamma: f64,
    pub prior_source: PriorSource,
    /// Uncertainty above which pairs are dropped before RANSAC in the
    /// `measurement_conf` and `full` modes. 1 keeps every pair.
    pub uncertainty_filter: f64,
    pub predictor: PredictorKind,
    /// Prediction file read when `predictor = "file"`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predictions: Option<String>,
    pub noise: NoiseModel,
    pub ransac: RansacConfig,
    pub loss_weights: LossWeights,
    pub tau_schedule: TauSchedule,
    /// Epoch at which the labeling threshold is evaluated for diagnostics.
    pub loss_epoch: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Full,
            voxel_size: 0.25,
            k_neighbors: 3,
            feature_radii: vec![0.5, 1.0, 2.0],
            backbone: Backbone::Geometric,
            embedding: EmbeddingConfig::default(),
            attention_temperature: 1.0,
            gamma: crate::pcg::DEFAULT_GAMMA,
            prior_source: PriorSource::Fused,
            uncertainty_filter: 0.5,
            predictor: PredictorKind::Synthetic,
            predictions: None,
            noise: NoiseModel::default(),
            ransac: RansacConfig::default(),
            loss_weights: LossWeights::default(),
            tau_schedule: TauSchedule::default(),
            loss_epoch: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if !(self.voxel_size > 0.0 && self.voxel_size.is_finite()) {
            return Err(Error::NonPositiveVoxel(self.voxel_size));
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be >= 1");
        }
        let radii = &self.feature_radii;
        if radii.is_empty() || !(radii[0] > 0.0) || radii.windows(2).any(|w| w[0] >= w[1]) || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::BadRadii);
        }
        if !(self.attention_temperature > 0.0 && self.attention_temperature.is_finite()) {
            return bad("attention_temperature must be > 0");
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.uncertainty_filter) {
            return bad("uncertainty_filter must lie in [0, 1]");
        }
        if self.embedding.dim == 0 || !(self.embedding.noise >= 0.0) {
            return bad("embedding: dim must be >= 1 and noise >= 0");
        }
        self.noise.validate()?;
        self.ransac.validate()?;
        self.loss_weights.validate()?;
        self.tau_schedule.validate()
    }

    fn r_max(&self) -> f64 {
        self.feature_radii.last().copied().unwrap_or(1.0)
    }
}

/// Per-frame record of a pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub t: usize,
    /// `false` when RANSAC found no consensus; errors and pose are then absent.
    pub ok: bool,
    pub translation_error: Option<f64>,
    pub rotation_error: Option<f64>,
    pub inlier_count: usize,
    pub dropped_rows: usize,
    pub pose: Option<Se3Pose>,
    pub gt_pose: Se3Pose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub mode: Mode,
    pub seed: u64,
    pub per_frame: Vec<FrameReport>,
    /// Over successful frames; absent when every frame failed.
    pub aggregates: Option<ErrorAggregates>,
    pub failed_frames: usize,
    pub config: PipelineConfig,
}

/// Everything computed for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub t: usize,
    /// Voxel-downsampled scan in the sensor frame.
    pub local: PointCloud,
    /// Ground-truth world positions of the downsampled points.
    pub gt_global: Option<Vec<Point3>>,
    pub measurement: UncertainCoords,
    pub prior: Option<UncertainCoords>,
    pub fused: UncertainCoords,
    pub correspondences: Option<SoftCorrespondences>,
    pub estimate: Option<PoseEstimate>,
}

/// A run's report and per-frame intermediates.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub report: TrajectoryReport,
    pub frames: Vec<FrameOutput>,
}

/// Per-frame seeds. The ransac seed also mixes in `cfg.ransac.seed`.
pub fn predictor_seed(run_seed: u64, t: usize) -> u64 {
    seed::derive_named(run_seed, "predict", t as u64)
}

pub fn ransac_seed(run_seed: u64, cfg: &RansacConfig, t: usize) -> u64 {
    seed::derive(seed::derive_named(run_seed, "ransac", cfg.seed), t as u64)
}

/// RANSAC settings actually used for frame `t` under `cfg.mode`.
pub fn frame_ransac_config(cfg: &PipelineConfig, run_seed: u64, t: usize) -> RansacConfig {
    RansacConfig {
        seed: ransac_seed(run_seed, &cfg.ransac, t),
        uncertainty_filter: match cfg.mode {
            Mode::MeasurementOnly => None,
            Mode::MeasurementConf | Mode::Full => Some(cfg.uncertainty_filter),
        },
        ..cfg.ransac
    }
}

/// Voxel-downsamples a scan; ground truth is averaged over the same voxels.
pub fn downsample_frame(frame: &ScanFrame, voxel_size: f64) -> Result<ScanFrame> {
    let groups = voxel_groups(frame.local_points(), voxel_size)?;
    let local = groups.iter().map(|g| centroid_of(frame.local_points().points(), g)).collect();
    let gt = frame
        .gt_global()
        .map(|gt| groups.iter().map(|g| centroid_of(gt, g)).collect());
    ScanFrame::new(frame.index(), PointCloud::new(local)?, gt, *frame.gt_pose())
}

struct PreviousFrame {
    features: Vec<FeatureMatrix>,
    world: Vec<Point3>,
    uncertainty: Vec<f64>,
}

fn frame_features(frame: &ScanFrame, cfg: &PipelineConfig, run_seed: u64) -> Result<Vec<FeatureMatrix>> {
    let raw = match cfg.backbone {
        Backbone::Geometric => extract_features(frame.local_points(), &cfg.feature_radii)?,
        Backbone::Embedding => {
            let gt = frame.gt_global().ok_or(Error::MissingGroundTruth(frame.index()))?;
            embed_features(
                gt,
                &cfg.feature_radii,
                &cfg.embedding,
                seed::derive_named(run_seed, "backbone", 0),
                seed::derive_named(run_seed, "features", frame.index() as u64),
            )?
        }
    };
    raw.iter()
        .map(|f| contextualize(f, &self_attention_with_temperature(f, cfg.attention_temperature)?))
        .collect()
}

/// Runs the pipeline with the synthetic predictor built from `cfg.noise`.
pub fn run_pipeline(frames: &[ScanFrame], cfg: &PipelineConfig, run_seed: u64) -> Result<PipelineRun> {
    match cfg.predictor {
        PredictorKind::Synthetic => run_pipeline_with(frames, cfg, run_seed, &SyntheticPredictor { noise: cfg.noise }),
        PredictorKind::File => Err(Error::InvalidParameter(
            "predictor = \"file\" needs a prediction source; use run_pipeline_with".into(),
        )),
    }
}

/// Processes `frames` in order. Frame 0, and every frame outside `full`
/// mode, uses its measurement as the fused output. A frame without RANSAC
/// consensus is marked failed and its measurement seeds the next prior.
pub fn run_pipeline_with(
    frames: &[ScanFrame],
    cfg: &PipelineConfig,
    run_seed: u64,
    predictor: &dyn CoordinatePredictor,
) -> Result<PipelineRun> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::EmptyInput("frames"));
    }
    let mut outputs = Vec::with_capacity(frames.len());
    let mut reports = Vec::with_capacity(frames.len());
    let mut previous: Option<PreviousFrame> = None;

    for (t, raw) in frames.iter().enumerate() {
        let frame = downsample_frame(raw, cfg.voxel_size)?;
        let measurement = predictor.predict(&frame, predictor_seed(run_seed, t))?;
        crate::error::ensure_same_len("measurement/scan points", measurement.len(), frame.len())?;

        let features = match cfg.mode {
            Mode::Full => Some(frame_features(&frame, cfg, run_seed)?),
            _ => None,
        };
        let mut prior = None;
        let mut correspondences = None;
        let fused = match (&features, &previous) {
            (Some(cur), Some(prev)) => {
                let cross = prev
                    .features
                    .iter()
                    .zip(cur)
                    .map(|(a, b)| cross_attention_with_temperature(a, b, cfg.attention_temperature))
                    .collect::<Result<Vec<_>>>()?;
                let corr = soft_correspondences(
                    &global_attention(&cross)?,
                    frame.local_points(),
                    &prev.world,
                    &prev.uncertainty,
                )?;
                let params = PropagationParams {
                    k: cfg.k_neighbors.min(corr.len()),
                    gamma: cfg.gamma,
                    r_max: cfg.r_max(),
                };
                let (p, _) = propagate_coordinates(frame.local_points(), &corr, &params)?;
                let w = fusion_weights(p.uncertainty(), measurement.uncertainty())?;
                let fused = fuse(&p, &measurement, &w)?;
                prior = Some(p);
                correspondences = Some(corr);
                fused
            }
            _ => measurement.clone().with_role(CoordRole::Fused),
        };

        let pairs = CorrespondenceSet::new(
            frame.local_points().clone(),
            fused.coords().to_vec(),
            fused.uncertainty().to_vec(),
        )?;
        let estimate = match ransac_pose(&pairs, &frame_ransac_config(cfg, run_seed, t)) {
            Ok(e) => Some(e),
            Err(Error::NoConsensus { .. } | Error::InsufficientCorrespondences { .. }) => None,
            Err(e) => return Err(e),
        };
        let errors = estimate.as_ref().map(|e| evaluate_pose(&e.pose, frame.gt_pose()));
        reports.push(FrameReport {
            t,
            ok: estimate.is_some(),
            translation_error: errors.map(|e| e.0),
            rotation_error: errors.map(|e| e.1),
            inlier_count: estimate.as_ref().map_or(0, |e| e.inlier_count),
            dropped_rows: correspondences.as_ref().map_or(0, |c| c.dropped_rows),
            pose: estimate.as_ref().map(|e| e.pose),
            gt_pose: *frame.gt_pose(),
        });

        if let Some(features) = features {
            let source = match (estimate.is_some(), cfg.prior_source) {
                (true, PriorSource::Fused) => &fused,
                _ => &measurement,
            };
            previous = Some(PreviousFrame {
                features,
                world: source.coords().to_vec(),
                uncertainty: source.uncertainty().to_vec(),
            });
        }
        outputs.push(FrameOutput {
            t,
            gt_global: frame.gt_global().map(<[Point3]>::to_vec),
            local: frame.local_points().clone(),
            measurement,
            prior,
            fused,
            correspondences,
            estimate,
        });
    }

    let errors: Vec<(f64, f64)> = reports
        .iter()
        .filter_map(|r| Some((r.translation_error?, r.rotation_error?)))
        .collect();
    let report = TrajectoryReport {
        mode: cfg.mode,
        seed: run_seed,
        failed_frames: reports.len() - errors.len(),
        aggregates: aggregate_errors(&errors).ok(),
        per_frame: reports,
        config: cfg.clone(),
    };
    Ok(PipelineRun { report, frames: outputs })
}

/// Loss diagnostics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameLosses {
    pub t: usize,
    pub l_gce: f64,
    pub l_pcg: f64,
    pub l_fuse: f64,
    pub l_full: f64,
}

/// Evaluates the training objective on every frame that has a prior.
/// Requires a `full`-mode run with ground truth.
pub fn compute_losses(run: &PipelineRun, cfg: &PipelineConfig) -> Result<Vec<FrameLosses>> {
    if run.report.mode != Mode::Full {
        return Err(Error::MissingIntermediates);
    }
    let tau = cfg.tau_schedule.tau_at_epoch(cfg.loss_epoch);
    run.frames
        .iter()
        .filter_map(|f| f.prior.as_ref().map(|p| (f, p)))
        .map(|(f, prior)| {
            let gt = f.gt_global.as_deref().ok_or(Error::MissingGroundTruth(f.t))?;
            let l_gce = pcg_losses(&f.measurement, gt, tau)?.value;
            let l_pcg = pcg_losses(prior, gt, tau)?.value;
            let l_fuse = loss_fuse(prior, &f.measurement, gt, tau)?.value;
            Ok(FrameLosses {
                t: f.t,
                l_gce,
                l_pcg,
                l_fuse,
                l_full: loss_full(l_gce, l_pcg, l_fuse, &cfg.loss_weights),
            })
        })
        .collect()
}
