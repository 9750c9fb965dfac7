//! Global coordinate estimation: per-point world coordinates with an
//! uncertainty score, the binary uncertainty labels they are supervised with,
//! and the regression/uncertainty losses with their analytic gradients.

mod losses;
mod predictor;

pub use losses::{
    label_uncertainty, loss_gce, loss_regression, loss_uncertainty, LossValue, TauSchedule,
};
pub use predictor::{
    parse_predictions, synthetic_predict, write_predictions, CoordinatePredictor, FilePredictor,
    NoiseModel, SyntheticPredictor, CALIBRATED_INLIER_UNCERTAINTY, CALIBRATED_OUTLIER_UNCERTAINTY,
};

use serde::{Deserialize, Serialize};

use crate::error::ensure_same_len;
use crate::geometry::Point3;
use crate::{Error, Result};

/// Which stage produced a set of coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordRole {
    Measurement,
    Prior,
    Fused,
}

/// World coordinates paired with per-point uncertainty in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainCoords {
    coords: Vec<Point3>,
    uncertainty: Vec<f64>,
    role: CoordRole,
}

impl UncertainCoords {
    /// Uncertainties are clamped into [0, 1].
    pub fn new(coords: Vec<Point3>, uncertainty: Vec<f64>, role: CoordRole) -> Result<Self> {
        ensure_same_len("coordinates/uncertainties", coords.len(), uncertainty.len())?;
        if coords.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("coordinates"));
        }
        if uncertainty.iter().any(|u| !u.is_finite()) {
            return Err(Error::NonFinite("uncertainties"));
        }
        let uncertainty = uncertainty.into_iter().map(|u| u.clamp(0.0, 1.0)).collect();
        Ok(Self {
            coords,
            uncertainty,
            role,
        })
    }

    pub fn coords(&self) -> &[Point3] {
        &self.coords
    }

    pub fn uncertainty(&self) -> &[f64] {
        &self.uncertainty
    }

    pub fn role(&self) -> CoordRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn with_role(mut self, role: CoordRole) -> Self {
        self.role = role;
        self
    }
}
