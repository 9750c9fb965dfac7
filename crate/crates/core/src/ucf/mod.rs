//! Uncertainty-guided fusion of prior and measured coordinates, and the
//! combined training objective with analytic gradients.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::ensure_same_len;
use crate::gce::{label_uncertainty, loss_gce, loss_regression, loss_uncertainty, CoordRole, UncertainCoords};
use crate::geometry::Point3;
use crate::{Error, Result};

/// Per-point weights on the prior (`alpha`) and the measurement (`beta`).
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

impl FusionWeights {
    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }
}

/// Weights of the coordinate-regression, prior and fused terms of the total
/// loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 0.3,
            lambda2: 0.3,
            lambda3: 0.4,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.lambda1, self.lambda2, self.lambda3]
            .iter()
            .all(|l| *l >= 0.0 && l.is_finite())
        {
            Ok(())
        } else {
            Err(Error::InvalidParameter("loss_weights must be finite and >= 0".into()))
        }
    }
}

fn check_inputs(prior_u: &[f64], meas_u: &[f64]) -> Result<()> {
    ensure_same_len("prior/measurement uncertainties", prior_u.len(), meas_u.len())?;
    if prior_u.iter().chain(meas_u).any(|u| !u.is_finite()) {
        return Err(Error::NonFinite("uncertainties"));
    }
    Ok(())
}

/// `(α, β) = softmax(-ũ, -û)` per point, computed after subtracting the
/// larger exponent.
pub fn fusion_weights(prior_u: &[f64], meas_u: &[f64]) -> Result<FusionWeights> {
    check_inputs(prior_u, meas_u)?;
    let (alpha, beta) = prior_u
        .iter()
        .zip(meas_u)
        .map(|(&up, &um)| {
            let m = (-up).max(-um);
            let ea = (-up - m).exp();
            let eb = (-um - m).exp();
            (ea / (ea + eb), eb / (ea + eb))
        })
        .unzip();
    Ok(FusionWeights { alpha, beta })
}

/// Weighted sums `α·p̃ + β·p̂` and `α·ũ + β·û`.
pub fn fuse(prior: &UncertainCoords, measurement: &UncertainCoords, weights: &FusionWeights) -> Result<UncertainCoords> {
    ensure_same_len("prior/measurement", prior.len(), measurement.len())?;
    ensure_same_len("coordinates/fusion weights", prior.len(), weights.alpha.len())?;
    ensure_same_len("fusion alpha/beta", weights.alpha.len(), weights.beta.len())?;
    let coords = (0..prior.len())
        .map(|i| {
            let (a, b) = (weights.alpha[i], weights.beta[i]);
            Point3::from(prior.coords()[i].coords * a + measurement.coords()[i].coords * b)
        })
        .collect();
    let uncertainty = (0..prior.len())
        .map(|i| weights.alpha[i] * prior.uncertainty()[i] + weights.beta[i] * measurement.uncertainty()[i])
        .collect();
    UncertainCoords::new(coords, uncertainty, CoordRole::Fused)
}

/// Partial derivatives of the fusion weights with respect to both
/// uncertainties.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionGradients {
    pub d_alpha_d_prior: Vec<f64>,
    pub d_alpha_d_meas: Vec<f64>,
    pub d_beta_d_prior: Vec<f64>,
    pub d_beta_d_meas: Vec<f64>,
}

pub fn fusion_gradients(prior_u: &[f64], meas_u: &[f64]) -> Result<FusionGradients> {
    let w = fusion_weights(prior_u, meas_u)?;
    let ab: Vec<f64> = w.alpha.iter().zip(&w.beta).map(|(a, b)| a * b).collect();
    Ok(FusionGradients {
        d_alpha_d_prior: ab.iter().map(|v| -v).collect(),
        d_alpha_d_meas: ab.clone(),
        d_beta_d_prior: ab.clone(),
        d_beta_d_meas: ab.iter().map(|v| -v).collect(),
    })
}

/// A scalar loss with gradients with respect to both fusion inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionLoss {
    pub value: f64,
    pub grad_prior_coords: Vec<Vector3<f64>>,
    pub grad_prior_uncertainty: Vec<f64>,
    pub grad_meas_coords: Vec<Vector3<f64>>,
    pub grad_meas_uncertainty: Vec<f64>,
}

/// Regression plus uncertainty loss of the fused output, labels recomputed
/// from the fused coordinates. Gradients flow through the fusion weights;
/// labels are piecewise constant and contribute none.
pub fn loss_fuse(
    prior: &UncertainCoords,
    measurement: &UncertainCoords,
    gt: &[Point3],
    tau: f64,
) -> Result<FusionLoss> {
    ensure_same_len("prior/ground truth", prior.len(), gt.len())?;
    let w = fusion_weights(prior.uncertainty(), measurement.uncertainty())?;
    let fused = fuse_unclamped(prior, measurement, &w);
    let labels = label_uncertainty(&fused.0, gt, tau)?;
    let reg = loss_regression(&fused.0, gt)?;
    let un = loss_uncertainty(&fused.1, &labels)?;
    let total = loss_gce(&reg, &un)?;

    let m = prior.len();
    let mut out = FusionLoss {
        value: total.value,
        grad_prior_coords: Vec::with_capacity(m),
        grad_prior_uncertainty: Vec::with_capacity(m),
        grad_meas_coords: Vec::with_capacity(m),
        grad_meas_uncertainty: Vec::with_capacity(m),
    };
    for i in 0..m {
        let (a, b) = (w.alpha[i], w.beta[i]);
        let ab = a * b;
        let gp = total.grad_coords[i];
        let gu = total.grad_uncertainty[i];
        let dp = prior.coords()[i] - measurement.coords()[i];
        let du = prior.uncertainty()[i] - measurement.uncertainty()[i];
        let through_weights = gp.dot(&dp) * ab + gu * du * ab;
        out.grad_prior_coords.push(gp * a);
        out.grad_meas_coords.push(gp * b);
        out.grad_prior_uncertainty.push(gu * a - through_weights);
        out.grad_meas_uncertainty.push(gu * b + through_weights);
    }
    Ok(out)
}

/// Fused coordinates and uncertainties without the [0, 1] clamp, so the loss
/// stays differentiable for any finite input.
fn fuse_unclamped(prior: &UncertainCoords, meas: &UncertainCoords, w: &FusionWeights) -> (Vec<Point3>, Vec<f64>) {
    (0..prior.len())
        .map(|i| {
            let (a, b) = (w.alpha[i], w.beta[i]);
            (
                Point3::from(prior.coords()[i].coords * a + meas.coords()[i].coords * b),
                a * prior.uncertainty()[i] + b * meas.uncertainty()[i],
            )
        })
        .unzip()
}

/// `λ1·L_GCE + λ2·L_PCG + λ3·L_Fuse`.
pub fn loss_full(l_gce: f64, l_pcg: f64, l_fuse: f64, w: &LossWeights) -> f64 {
    w.lambda1 * l_gce + w.lambda2 * l_pcg + w.lambda3 * l_fuse
}

/// The total loss with its gradient with respect to the measured and prior
/// coordinates and uncertainties. `L_GCE` and `L_PCG` label against `tau`
/// from their own coordinates.
pub fn loss_full_with_gradients(
    measurement: &UncertainCoords,
    prior: &UncertainCoords,
    gt: &[Point3],
    tau: f64,
    w: &LossWeights,
) -> Result<FusionLoss> {
    let gce = crate::pcg::pcg_losses(measurement, gt, tau)?;
    let pcg = crate::pcg::pcg_losses(prior, gt, tau)?;
    let fused = loss_fuse(prior, measurement, gt, tau)?;
    let combine_v = |own: &[Vector3<f64>], lam: f64, f: &[Vector3<f64>]| -> Vec<Vector3<f64>> {
        own.iter().zip(f).map(|(g, h)| g * lam + h * w.lambda3).collect()
    };
    let combine_s = |own: &[f64], lam: f64, f: &[f64]| -> Vec<f64> {
        own.iter().zip(f).map(|(g, h)| g * lam + h * w.lambda3).collect()
    };
    Ok(FusionLoss {
        value: loss_full(gce.value, pcg.value, fused.value, w),
        grad_prior_coords: combine_v(&pcg.grad_coords, w.lambda2, &fused.grad_prior_coords),
        grad_prior_uncertainty: combine_s(&pcg.grad_uncertainty, w.lambda2, &fused.grad_prior_uncertainty),
        grad_meas_coords: combine_v(&gce.grad_coords, w.lambda1, &fused.grad_meas_coords),
        grad_meas_uncertainty: combine_s(&gce.grad_uncertainty, w.lambda1, &fused.grad_meas_uncertainty),
    })
}
