use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ScanFrame, World};
use crate::geometry::{Point3, PointCloud, Se3Pose};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    pub max_range: f64,
    /// Upper bound on points per scan.
    pub points_per_scan: usize,
    /// Gaussian noise added to sensor-frame coordinates, meters.
    pub scan_noise_sigma: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            max_range: 12.0,
            points_per_scan: 256,
            scan_noise_sigma: 0.01,
        }
    }
}

impl SensorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range > 0.0 && self.max_range.is_finite()) {
            return Err(Error::InvalidParameter("sensor: max_range must be positive".into()));
        }
        if self.points_per_scan < 10 {
            return Err(Error::InvalidParameter("sensor: points_per_scan must be >= 10".into()));
        }
        if !(self.scan_noise_sigma >= 0.0 && self.scan_noise_sigma.is_finite()) {
            return Err(Error::InvalidParameter("sensor: scan_noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Maximum horizontal displacement of a transient point from its pool anchor.
const CLUTTER_JITTER: f64 = 1.5;

/// Scan of `world` from `pose`.
///
/// Stable points within `max_range` are kept in order of a fixed per-point
/// priority derived from `seed` (so consecutive scans keep seeing the same
/// structure) until `points_per_scan` is reached. A `clutter_fraction` share
/// of the scan is transient: clutter-pool points in range, displaced to fresh
/// random nearby positions every frame. Sensor-frame coordinates get Gaussian
/// noise; `gt_global` holds the noiseless world positions.
pub fn render_scan(
    world: &World,
    pose: &Se3Pose,
    sensor: &SensorConfig,
    frame_index: usize,
    seed: u64,
) -> Result<ScanFrame> {
    sensor.validate()?;
    let origin = Point3::from(*pose.translation());
    let in_range = |p: &Point3| nalgebra::distance(p, &origin) <= sensor.max_range;

    let mut stable: Vec<usize> = (0..world.points.len())
        .filter(|&i| world.stable[i] && in_range(&world.points[i]))
        .collect();
    let clutter: Vec<&Point3> = world.clutter().filter(|p| in_range(p)).collect();
    if stable.is_empty() {
        return Err(Error::EmptyScan(frame_index));
    }

    let clutter_fraction = world.clutter_fraction;
    let n_total = sensor
        .points_per_scan
        .min((stable.len() as f64 / (1.0 - clutter_fraction)).round() as usize);
    let n_transient = if clutter.is_empty() {
        0
    } else {
        (clutter_fraction * n_total as f64).round() as usize
    };
    let n_stable = (n_total - n_transient).min(stable.len());

    let beam_seed = seed::derive_named(seed, "beam", 0);
    stable.sort_by_key(|&i| (seed::derive(beam_seed, i as u64), i));
    stable.truncate(n_stable);
    stable.sort_unstable();

    let mut rng = seed::rng(seed::derive_named(seed, "frame", frame_index as u64));
    let mut gt: Vec<Point3> = stable.iter().map(|&i| world.points[i]).collect();
    for _ in 0..n_transient {
        let anchor = clutter[rng.random_range(0..clutter.len())];
        let moved = loop {
            let p = Point3::new(
                anchor.x + rng.random_range(-CLUTTER_JITTER..CLUTTER_JITTER),
                anchor.y + rng.random_range(-CLUTTER_JITTER..CLUTTER_JITTER),
                rng.random_range(0.2..2.0),
            );
            if in_range(&p) {
                break p;
            }
        };
        gt.push(moved);
    }

    let to_local = pose.inverse();
    let local: Vec<Point3> = gt
        .iter()
        .map(|p| {
            let noise = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
            to_local.transform_point(p) + noise * sensor.scan_noise_sigma
        })
        .collect();
    ScanFrame::new(frame_index, PointCloud::new(local)?, Some(gt), *pose)
}
