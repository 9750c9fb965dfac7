use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{rot_z, Se3Pose};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrajectoryConfig {
    pub n_frames: usize,
    /// Distance between consecutive sensor positions, meters.
    pub step: f64,
    /// Mean heading change per frame, degrees.
    pub turn_rate_deg: f64,
    /// Standard deviation of the per-frame heading perturbation, degrees.
    pub heading_jitter_deg: f64,
    pub sensor_height: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            n_frames: 100,
            step: 1.0,
            turn_rate_deg: 3.6,
            heading_jitter_deg: 0.5,
            sensor_height: 1.8,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames < 2 {
            return Err(Error::InvalidParameter("trajectory: n_frames must be >= 2".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter("trajectory: step must be positive".into()));
        }
        if !(self.turn_rate_deg.is_finite()
            && self.heading_jitter_deg >= 0.0
            && self.sensor_height.is_finite())
        {
            return Err(Error::InvalidParameter("trajectory: non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Planar path at constant height starting at the origin with heading 0.
/// Each step moves `step` meters along the current heading, then the heading
/// advances by `turn_rate_deg` plus Gaussian jitter.
pub fn generate_trajectory(cfg: &TrajectoryConfig, seed: u64) -> Result<Vec<Se3Pose>> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let mut heading: f64 = 0.0;
    let mut position = Vector3::new(0.0, 0.0, cfg.sensor_height);
    let mut poses = Vec::with_capacity(cfg.n_frames);
    for _ in 0..cfg.n_frames {
        poses.push(Se3Pose::from_parts_unchecked(rot_z(heading), position));
        let (s, c) = heading.to_radians().sin_cos();
        position += Vector3::new(c, s, 0.0) * cfg.step;
        heading += cfg.turn_rate_deg + cfg.heading_jitter_deg * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(poses)
}
