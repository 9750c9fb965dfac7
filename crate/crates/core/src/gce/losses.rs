use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ensure_same_len;
use crate::geometry::Point3;
use crate::{Error, Result};

/// Step decay of the labeling threshold: `tau0 · decay_factor^⌊epoch / period⌋`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauSchedule {
    pub tau0: f64,
    pub decay_factor: f64,
    pub period_epochs: u32,
}

impl Default for TauSchedule {
    fn default() -> Self {
        Self {
            tau0: 1.0,
            decay_factor: 0.7,
            period_epochs: 6,
        }
    }
}

impl TauSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            return Err(Error::InvalidParameter("tau0 must be positive".into()));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return Err(Error::InvalidParameter("decay_factor must lie in (0, 1)".into()));
        }
        if self.period_epochs == 0 {
            return Err(Error::InvalidParameter("period_epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn tau_at_epoch(&self, epoch: u32) -> f64 {
        self.tau0 * self.decay_factor.powi((epoch / self.period_epochs) as i32)
    }
}

/// A loss value with its gradient with respect to the predicted coordinates
/// and uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad_coords: Vec<Vector3<f64>>,
    pub grad_uncertainty: Vec<f64>,
}

impl LossValue {
    pub fn zero(m: usize) -> Self {
        Self {
            value: 0.0,
            grad_coords: vec![Vector3::zeros(); m],
            grad_uncertainty: vec![0.0; m],
        }
    }

    pub fn len(&self) -> usize {
        self.grad_uncertainty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad_uncertainty.is_empty()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            grad_coords: self.grad_coords.iter().map(|g| g * factor).collect(),
            grad_uncertainty: self.grad_uncertainty.iter().map(|g| g * factor).collect(),
        }
    }
}

fn l1(a: &Point3, b: &Point3) -> f64 {
    (a - b).abs().sum()
}

/// Binary uncertainty targets: 0 where the L1 coordinate error is strictly
/// below `tau`, 1 otherwise.
pub fn label_uncertainty(pred: &[Point3], gt: &[Point3], tau: f64) -> Result<Vec<f64>> {
    ensure_same_len("predicted/ground-truth coordinates", pred.len(), gt.len())?;
    if !(tau > 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
    }
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(p, g)| if l1(p, g) < tau { 0.0 } else { 1.0 })
        .collect())
}

/// Mean squared error between predicted and target uncertainties.
pub fn loss_uncertainty(pred_u: &[f64], gt_u: &[f64]) -> Result<LossValue> {
    ensure_same_len("predicted/target uncertainties", pred_u.len(), gt_u.len())?;
    if pred_u.is_empty() {
        return Err(Error::EmptyInput("uncertainty loss"));
    }
    let m = pred_u.len() as f64;
    let residuals: Vec<f64> = pred_u.iter().zip(gt_u).map(|(p, g)| p - g).collect();
    Ok(LossValue {
        value: residuals.iter().map(|r| r * r).sum::<f64>() / m,
        grad_coords: vec![Vector3::zeros(); pred_u.len()],
        grad_uncertainty: residuals.iter().map(|r| 2.0 * r / m).collect(),
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean L1 distance between predicted and ground-truth coordinates.
/// The subgradient at a zero residual component is 0.
pub fn loss_regression(pred: &[Point3], gt: &[Point3]) -> Result<LossValue> {
    ensure_same_len("predicted/ground-truth coordinates", pred.len(), gt.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("regression loss"));
    }
    let m = pred.len() as f64;
    Ok(LossValue {
        value: pred.iter().zip(gt).map(|(p, g)| l1(p, g)).sum::<f64>() / m,
        grad_coords: pred
            .iter()
            .zip(gt)
            .map(|(p, g)| (p - g).map(sign) / m)
            .collect(),
        grad_uncertainty: vec![0.0; pred.len()],
    })
}

/// Sum of the regression and uncertainty terms.
pub fn loss_gce(l_reg: &LossValue, l_un: &LossValue) -> Result<LossValue> {
    ensure_same_len("loss gradients", l_reg.grad_coords.len(), l_un.grad_coords.len())?;
    ensure_same_len("loss gradients", l_reg.grad_uncertainty.len(), l_un.grad_uncertainty.len())?;
    Ok(LossValue {
        value: l_reg.value + l_un.value,
        grad_coords: l_reg
            .grad_coords
            .iter()
            .zip(&l_un.grad_coords)
            .map(|(a, b)| a + b)
            .collect(),
        grad_uncertainty: l_reg
            .grad_uncertainty
            .iter()
            .zip(&l_un.grad_uncertainty)
            .map(|(a, b)| a + b)
            .collect(),
    })
}
