use std::collections::BTreeMap;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CoordRole, UncertainCoords};
use crate::geometry::Point3;
use crate::simulator::ScanFrame;
use crate::{seed, Error, Result};

/// Uncertainty emitted for a correctly flagged inlier.
pub const CALIBRATED_INLIER_UNCERTAINTY: f64 = 0.1;
/// Uncertainty emitted for a correctly flagged outlier.
pub const CALIBRATED_OUTLIER_UNCERTAINTY: f64 = 0.9;

/// Error characteristics of the synthetic coordinate regressor.
///
/// Outliers are displaced along a uniformly random direction by a magnitude
/// drawn uniformly from `[outlier_offset, 2 · outlier_offset)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    pub sigma: f64,
    pub outlier_rate: f64,
    pub outlier_offset: f64,
    pub calibration: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma: 0.3,
            outlier_rate: 0.15,
            outlier_offset: 1.0,
            calibration: 0.9,
        }
    }
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            outlier_rate: 0.0,
            outlier_offset: 1.0,
            calibration: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("noise: {m}")));
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma must be >= 0");
        }
        if !(0.0..1.0).contains(&self.outlier_rate) {
            return bad("outlier_rate must lie in [0, 1)");
        }
        if !(self.outlier_offset > 0.0 && self.outlier_offset.is_finite()) {
            return bad("outlier_offset must be > 0");
        }
        if !(0.0..=1.0).contains(&self.calibration) {
            return bad("calibration must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Source of per-point world coordinates and uncertainties for a scan.
pub trait CoordinatePredictor: Send + Sync {
    fn predict(&self, frame: &ScanFrame, seed: u64) -> Result<UncertainCoords>;
}

/// Ground truth corrupted according to a [`NoiseModel`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticPredictor {
    pub noise: NoiseModel,
}

impl CoordinatePredictor for SyntheticPredictor {
    fn predict(&self, frame: &ScanFrame, seed: u64) -> Result<UncertainCoords> {
        synthetic_predict(frame, &self.noise, seed)
    }
}

fn unit_direction<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

/// Stand-in for a trained scene-coordinate regressor.
///
/// Per point: with probability `outlier_rate` the ground truth is pushed by a
/// gross offset, otherwise it receives isotropic Gaussian noise. With
/// probability `calibration` the emitted uncertainty is 0.1 / 0.9 for
/// inliers / outliers, otherwise it is uniform in [0, 1].
pub fn synthetic_predict(frame: &ScanFrame, noise: &NoiseModel, seed: u64) -> Result<UncertainCoords> {
    noise.validate()?;
    let gt = frame
        .gt_global()
        .ok_or(Error::MissingGroundTruth(frame.index()))?;
    let mut rng = seed::rng(seed);
    let mut coords = Vec::with_capacity(gt.len());
    let mut uncertainty = Vec::with_capacity(gt.len());
    for g in gt {
        let outlier = rng.random::<f64>() < noise.outlier_rate;
        let offset = if outlier {
            let magnitude = noise.outlier_offset * (1.0 + rng.random::<f64>());
            unit_direction(&mut rng) * magnitude
        } else {
            Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal)) * noise.sigma
        };
        coords.push(g + offset);
        let u = if rng.random::<f64>() < noise.calibration {
            if outlier {
                CALIBRATED_OUTLIER_UNCERTAINTY
            } else {
                CALIBRATED_INLIER_UNCERTAINTY
            }
        } else {
            rng.random::<f64>()
        };
        uncertainty.push(u);
    }
    UncertainCoords::new(coords, uncertainty, CoordRole::Measurement)
}

/// One prediction record of the line-delimited JSON prediction file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PredictionRecord {
    t: usize,
    coords: Vec<f64>,
    uncertainty: Vec<f64>,
}

/// Precomputed predictions keyed by frame index, one JSON object per line:
/// `{"t": 0, "coords": [x0, y0, z0, ...], "uncertainty": [u0, ...]}`.
/// Point order must match the voxel-downsampled scan the pipeline feeds in.
#[derive(Debug, Clone, Default)]
pub struct FilePredictor {
    frames: BTreeMap<usize, UncertainCoords>,
}

impl FilePredictor {
    pub fn new(frames: BTreeMap<usize, UncertainCoords>) -> Self {
        Self { frames }
    }
}

impl CoordinatePredictor for FilePredictor {
    fn predict(&self, frame: &ScanFrame, _seed: u64) -> Result<UncertainCoords> {
        let pred = self.frames.get(&frame.index()).ok_or_else(|| {
            Error::InvalidParameter(format!("no prediction for frame {}", frame.index()))
        })?;
        crate::error::ensure_same_len("predicted/scan points", pred.len(), frame.len())?;
        Ok(pred.clone())
    }
}

pub fn parse_predictions(text: &str) -> Result<FilePredictor> {
    let mut frames = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let rec: PredictionRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.coords.len() != 3 * rec.uncertainty.len() {
            return Err(bad("coords must hold 3 numbers per uncertainty".into()));
        }
        let coords = rec
            .coords
            .chunks_exact(3)
            .map(|c| Point3::new(c[0], c[1], c[2]))
            .collect();
        let coords = UncertainCoords::new(coords, rec.uncertainty, CoordRole::Measurement)
            .map_err(|e| bad(e.to_string()))?;
        if frames.insert(rec.t, coords).is_some() {
            return Err(bad(format!("duplicate frame {}", rec.t)));
        }
    }
    Ok(FilePredictor::new(frames))
}

pub fn write_predictions<'a>(frames: impl IntoIterator<Item = (usize, &'a UncertainCoords)>) -> String {
    let mut out = String::new();
    for (t, c) in frames {
        let rec = PredictionRecord {
            t,
            coords: c.coords().iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
            uncertainty: c.uncertainty().to_vec(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("prediction record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{PointCloud, Se3Pose};

    fn frame(n: usize) -> ScanFrame {
        let pts: Vec<Point3> = (0..n)
            .map(|i| Point3::new(i as f64 * 0.37, (i % 7) as f64, (i % 3) as f64 * 0.5))
            .collect();
        ScanFrame::new(3, PointCloud::new(pts.clone()).unwrap(), Some(pts), Se3Pose::identity()).unwrap()
    }

    #[test]
    fn noiseless_limit() {
        let f = frame(20);
        let out = synthetic_predict(&f, &NoiseModel::noiseless(), 5).unwrap();
        assert_eq!(out.coords(), f.gt_global().unwrap());
        assert!(out.uncertainty().iter().all(|&u| u == CALIBRATED_INLIER_UNCERTAINTY));
        assert_eq!(out.role(), CoordRole::Measurement);
    }

    #[test]
    fn all_outliers_are_far() {
        let f = frame(500);
        let noise = NoiseModel {
            sigma: 0.1,
            outlier_rate: 0.999_999,
            outlier_offset: 2.0,
            calibration: 1.0,
        };
        let out = synthetic_predict(&f, &noise, 1).unwrap();
        for (p, g) in out.coords().iter().zip(f.gt_global().unwrap()) {
            let d = nalgebra::distance(p, g);
            assert!((2.0 - 1e-12..4.0).contains(&d), "{d}");
        }
        assert!(out.uncertainty().iter().all(|&u| u == CALIBRATED_OUTLIER_UNCERTAINTY));
    }

    #[test]
    fn deterministic_per_seed() {
        let f = frame(100);
        let n = NoiseModel::default();
        assert_eq!(synthetic_predict(&f, &n, 9).unwrap(), synthetic_predict(&f, &n, 9).unwrap());
        assert_ne!(synthetic_predict(&f, &n, 9).unwrap(), synthetic_predict(&f, &n, 10).unwrap());
    }

    #[test]
    fn calibrated_labels_track_error() {
        let f = frame(2000);
        let noise = NoiseModel {
            sigma: 0.3,
            outlier_rate: 0.2,
            outlier_offset: 1.0,
            calibration: 1.0,
        };
        for s in 0..5 {
            let out = synthetic_predict(&f, &noise, s).unwrap();
            let (mut lo, mut hi) = ((0.0, 0usize), (0.0, 0usize));
            for ((p, g), &u) in out.coords().iter().zip(f.gt_global().unwrap()).zip(out.uncertainty()) {
                let d = nalgebra::distance(p, g);
                if u == CALIBRATED_INLIER_UNCERTAINTY {
                    lo = (lo.0 + d, lo.1 + 1);
                } else {
                    hi = (hi.0 + d, hi.1 + 1);
                }
            }
            assert!(lo.0 / (lo.1 as f64) < hi.0 / (hi.1 as f64));
        }
    }

    #[test]
    fn missing_ground_truth() {
        let f = ScanFrame::new(4, PointCloud::new(vec![Point3::origin()]).unwrap(), None, Se3Pose::identity()).unwrap();
        assert_eq!(
            synthetic_predict(&f, &NoiseModel::default(), 0),
            Err(Error::MissingGroundTruth(4))
        );
    }

    #[test]
    fn prediction_file_round_trip() {
        let f = frame(6);
        let pred = synthetic_predict(&f, &NoiseModel::default(), 2).unwrap();
        let text = write_predictions([(3, &pred)]);
        let table = parse_predictions(&text).unwrap();
        assert_eq!(table.predict(&f, 0).unwrap(), pred);
        assert!(table.predict(&frame(5), 0).is_err());
        assert!(matches!(
            parse_predictions("{\"t\":0,\"coords\":[1,2],\"uncertainty\":[0.5]}"),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
