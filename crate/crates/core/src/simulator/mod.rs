//! Synthetic worlds, trajectories and scans with exact ground truth.

mod scan;
mod sequence;
mod trajectory;
mod world;

pub use scan::{render_scan, SensorConfig};
pub use sequence::{parse_sequence, write_sequence, write_sequence_record};
pub use trajectory::{generate_trajectory, TrajectoryConfig};
pub use world::{generate_world, Building, World, WorldConfig};

use rayon::prelude::*;

use crate::geometry::{Point3, PointCloud, Se3Pose};
use crate::{seed, Error, Result};

/// One LiDAR scan: sensor-frame points, their ground-truth world positions
/// (index-aligned, when known) and the sensor-to-world pose.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanFrame {
    index: usize,
    local_points: PointCloud,
    gt_global: Option<Vec<Point3>>,
    gt_pose: Se3Pose,
}

impl ScanFrame {
    pub fn new(
        index: usize,
        local_points: PointCloud,
        gt_global: Option<Vec<Point3>>,
        gt_pose: Se3Pose,
    ) -> Result<Self> {
        if let Some(gt) = &gt_global {
            crate::error::ensure_same_len("scan points/ground truth", local_points.len(), gt.len())?;
            if gt.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
                return Err(Error::NonFinite("ground-truth coordinates"));
            }
        }
        Ok(Self {
            index,
            local_points,
            gt_global,
            gt_pose,
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn local_points(&self) -> &PointCloud {
        &self.local_points
    }

    pub fn gt_global(&self) -> Option<&[Point3]> {
        self.gt_global.as_deref()
    }

    pub fn gt_pose(&self) -> &Se3Pose {
        &self.gt_pose
    }

    pub fn len(&self) -> usize {
        self.local_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_points.is_empty()
    }
}

/// Everything needed to simulate a sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimulationConfig {
    pub world: WorldConfig,
    pub sensor: SensorConfig,
    pub trajectory: TrajectoryConfig,
}

/// World, trajectory and scans for `seed`. Scans are rendered in parallel;
/// each derives its own seed from `(seed, frame index)`.
pub fn simulate_sequence(cfg: &SimulationConfig, seed: u64) -> Result<Vec<ScanFrame>> {
    let world = generate_world(&cfg.world, seed::derive_named(seed, "world", 0))?;
    let poses = generate_trajectory(&cfg.trajectory, seed::derive_named(seed, "trajectory", 0))?;
    let scan_seed = seed::derive_named(seed, "scan", 0);
    poses
        .par_iter()
        .enumerate()
        .map(|(t, pose)| render_scan(&world, pose, &cfg.sensor, t, scan_seed))
        .collect()
}
