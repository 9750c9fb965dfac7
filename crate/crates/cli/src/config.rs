use serde::{Deserialize, Serialize};

use seqloc::pipeline::PipelineConfig;
use seqloc::simulator::{SensorConfig, SimulationConfig, TrajectoryConfig, WorldConfig};

use crate::CliError;

/// The single configuration document shared by every command. Absent keys
/// take their defaults; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub seed: u64,
    pub pipeline: PipelineConfig,
    pub world: WorldConfig,
    pub sensor: SensorConfig,
    pub trajectory: TrajectoryConfig,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: CliConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |section: &str, e: seqloc::Error| CliError::Config(format!("{section}: {e}"));
        self.pipeline.validate().map_err(|e| wrap("pipeline", e))?;
        self.world.validate().map_err(|e| wrap("world", e))?;
        self.sensor.validate().map_err(|e| wrap("sensor", e))?;
        self.trajectory.validate().map_err(|e| wrap("trajectory", e))
    }

    pub fn simulation(&self) -> SimulationConfig {
        SimulationConfig {
            world: self.world,
            sensor: self.sensor,
            trajectory: self.trajectory,
        }
    }

    /// The effective configuration as a TOML document.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes to TOML")
    }
}
