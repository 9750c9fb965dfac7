//! Per-point descriptors feeding the attention stages.
//!
//! Two backbones are provided. [`extract_features`] computes handcrafted local
//! shape descriptors from the scan alone. [`embed_features`] is a synthetic
//! stand-in for a trained registration network: it embeds each point's
//! ground-truth world position with random Fourier features, so the same
//! physical point gets nearly the same descriptor in every scan.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geometry::{KdTree, Point3, PointCloud};
use crate::{seed, Error, Result};

/// Dimension of the handcrafted descriptor.
pub const GEOMETRIC_DIM: usize = 8;

/// `n × dim` row-major descriptors for one attention level.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n: usize,
    dim: usize,
    level: usize,
}

impl FeatureMatrix {
    /// Rejects non-finite entries and all-zero rows.
    pub fn new(data: Vec<f64>, dim: usize, level: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::InvalidParameter(format!(
                "feature buffer of {} values does not split into rows of {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        let m = Self {
            n: data.len() / dim,
            data,
            dim,
            level,
        };
        if let Some(i) = (0..m.n).find(|&i| m.row(i).iter().all(|&v| v == 0.0)) {
            return Err(Error::ZeroFeatureRow(i));
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<f64>], level: usize) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(dim, rows.iter().map(Vec::len).find(|&l| l != dim).unwrap()));
        }
        Self::new(rows.concat(), dim, level)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub(crate) fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn from_parts_unchecked(data: Vec<f64>, dim: usize, level: usize) -> Self {
        Self {
            n: data.len() / dim,
            data,
            dim,
            level,
        }
    }
}

fn check_radii(radii: &[f64]) -> Result<()> {
    let increasing = radii.windows(2).all(|w| w[0] < w[1]);
    if radii.is_empty() || !increasing || !(radii[0] > 0.0) || !radii.iter().all(|r| r.is_finite()) {
        return Err(Error::BadRadii);
    }
    Ok(())
}

fn lower_median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

/// Handcrafted local-shape descriptor, one [`FeatureMatrix`] per radius.
///
/// Row layout: the local covariance eigenvalues normalized to sum 1
/// (descending), linearity `(λ1-λ2)/λ1`, planarity `(λ2-λ3)/λ1`, sphericity
/// `λ3/λ1`, height above the cloud's median z, and neighbor count over cloud
/// size. Neighborhoods include the point itself; with fewer than 3 members
/// (or a zero covariance) the isotropic row `(⅓, ⅓, ⅓, 0, 0, 1, Δz, density)`
/// is used.
pub fn extract_features(cloud: &PointCloud, radii: &[f64]) -> Result<Vec<FeatureMatrix>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    check_radii(radii)?;
    let pts = cloud.points();
    let tree = KdTree::new(pts);
    let median_z = lower_median(pts.iter().map(|p| p.z).collect());
    let n = pts.len() as f64;

    radii
        .iter()
        .enumerate()
        .map(|(level, &radius)| {
            let rows: Vec<[f64; GEOMETRIC_DIM]> = pts
                .par_iter()
                .map(|p| {
                    let neighbors = tree.within_radius(p, radius);
                    let dz = p.z - median_z;
                    let density = neighbors.len() as f64 / n;
                    shape_descriptor(pts, &neighbors).map_or(
                        [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0, 0.0, 1.0, dz, density],
                        |[l1, l2, l3]| {
                            let sum = l1 + l2 + l3;
                            [
                                l1 / sum,
                                l2 / sum,
                                l3 / sum,
                                (l1 - l2) / l1,
                                (l2 - l3) / l1,
                                l3 / l1,
                                dz,
                                density,
                            ]
                        },
                    )
                })
                .collect();
            Ok(FeatureMatrix::from_parts_unchecked(
                rows.concat(),
                GEOMETRIC_DIM,
                level,
            ))
        })
        .collect()
}

/// Descending covariance eigenvalues, or `None` for fewer than 3 neighbors
/// or a vanishing covariance.
fn shape_descriptor(pts: &[Point3], neighbors: &[usize]) -> Option<[f64; 3]> {
    if neighbors.len() < 3 {
        return None;
    }
    let k = neighbors.len() as f64;
    let mean = neighbors
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + pts[i].coords)
        / k;
    let cov = neighbors.iter().fold(Matrix3::zeros(), |acc, &i| {
        let d = pts[i].coords - mean;
        acc + d * d.transpose()
    }) / k;
    let mut ev: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    (ev[0] > 0.0).then_some([ev[0], ev[1], ev[2]])
}

/// Parameters of the synthetic learned-feature backbone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingConfig {
    /// Descriptor dimension per level.
    pub dim: usize,
    /// Per-scan Gaussian descriptor noise, relative to the unit row norm.
    pub noise: f64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self { dim: 32, noise: 0.05 }
    }
}

/// Random Fourier features of the ground-truth world positions.
///
/// Level `l` uses frequencies drawn from `N(0, I / radii[l]²)` and uniform
/// phases, both fixed by `weights_seed` (the "network weights", shared by all
/// scans). Rows are `sqrt(2/dim) · cos(ω·x + b)` plus per-scan noise drawn
/// from `scan_seed`, so the cosine similarity of two descriptors approximates
/// `exp(-|x - y|² / (2 radii[l]²))`.
pub fn embed_features(
    gt_world: &[Point3],
    radii: &[f64],
    cfg: &EmbeddingConfig,
    weights_seed: u64,
    scan_seed: u64,
) -> Result<Vec<FeatureMatrix>> {
    if gt_world.is_empty() {
        return Err(Error::EmptyCloud);
    }
    check_radii(radii)?;
    if cfg.dim == 0 || !(cfg.noise >= 0.0) {
        return Err(Error::InvalidParameter("embedding: dim must be >= 1 and noise >= 0".into()));
    }
    let dim = cfg.dim;
    let scale = (2.0 / dim as f64).sqrt();
    let noise_std = cfg.noise / (dim as f64).sqrt();
    radii
        .iter()
        .enumerate()
        .map(|(level, &radius)| {
            let mut w_rng = seed::rng(seed::derive(weights_seed, level as u64));
            let freqs: Vec<(Vector3<f64>, f64)> = (0..dim)
                .map(|_| {
                    let omega = Vector3::from_fn(|_, _| w_rng.sample::<f64, _>(StandardNormal)) / radius;
                    (omega, w_rng.random_range(0.0..TAU))
                })
                .collect();
            let mut n_rng = seed::rng(seed::derive(scan_seed, level as u64));
            let mut data = Vec::with_capacity(gt_world.len() * dim);
            for p in gt_world {
                for (omega, phase) in &freqs {
                    let clean = scale * (omega.dot(&p.coords) + phase).cos();
                    data.push(clean + noise_std * n_rng.sample::<f64, _>(StandardNormal));
                }
            }
            FeatureMatrix::new(data, dim, level)
        })
        .collect()
}
