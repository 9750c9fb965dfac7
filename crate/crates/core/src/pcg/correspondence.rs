//! Soft correspondences and inverse-distance propagation of world coordinates
//! from the previous scan onto the current one.

use rayon::prelude::*;

use super::attention::AttentionMatrix;
use crate::error::ensure_same_len;
use crate::gce::{label_uncertainty, loss_regression, loss_uncertainty, CoordRole, LossValue, UncertainCoords};
use crate::geometry::{KdTree, Point3, PointCloud};
use crate::{Error, Result};

/// Rows of the global attention summing to at most this are dropped.
pub const ROW_EPSILON: f64 = 1e-30;

/// Default extrapolation penalty of the prior uncertainty.
pub const DEFAULT_GAMMA: f64 = 0.5;

/// Attention-weighted positions of previous-scan points in the current scan's
/// sensor frame, each carrying its source's world coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftCorrespondences {
    pub pseudo_points: Vec<Point3>,
    pub inherited_world: Vec<Point3>,
    pub inherited_uncertainty: Vec<f64>,
    pub source_index: Vec<usize>,
    /// Previous-scan rows whose attention mass vanished.
    pub dropped_rows: usize,
}

impl SoftCorrespondences {
    pub fn len(&self) -> usize {
        self.pseudo_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pseudo_points.is_empty()
    }
}

/// Pseudo-point `i = Σ_j A_ij p_j / Σ_j A_ij` for every previous-scan row.
///
/// Rows whose sum is at most [`ROW_EPSILON`] are dropped and counted; if every
/// row is dropped the first one is reported as [`Error::DegenerateRow`].
pub fn soft_correspondences(
    a_global: &AttentionMatrix,
    cloud_cur: &PointCloud,
    prev_world: &[Point3],
    prev_uncertainty: &[f64],
) -> Result<SoftCorrespondences> {
    ensure_same_len("attention columns/current scan", a_global.cols(), cloud_cur.len())?;
    ensure_same_len("attention rows/previous coordinates", a_global.rows(), prev_world.len())?;
    ensure_same_len("previous coordinates/uncertainties", prev_world.len(), prev_uncertainty.len())?;
    let pts = cloud_cur.points();
    let rows: Vec<Option<Point3>> = (0..a_global.rows())
        .into_par_iter()
        .map(|i| {
            let row = a_global.row(i);
            let total: f64 = row.iter().sum();
            if !(total > ROW_EPSILON) {
                return None;
            }
            let sum = row
                .iter()
                .zip(pts)
                .fold(nalgebra::Vector3::zeros(), |acc, (w, p)| acc + p.coords * *w);
            Some(Point3::from(sum / total))
        })
        .collect();

    let mut out = SoftCorrespondences {
        pseudo_points: Vec::new(),
        inherited_world: Vec::new(),
        inherited_uncertainty: Vec::new(),
        source_index: Vec::new(),
        dropped_rows: 0,
    };
    for (i, p) in rows.into_iter().enumerate() {
        match p {
            Some(p) => {
                out.pseudo_points.push(p);
                out.inherited_world.push(prev_world[i]);
                out.inherited_uncertainty.push(prev_uncertainty[i]);
                out.source_index.push(i);
            }
            None => out.dropped_rows += 1,
        }
    }
    if out.is_empty() && out.dropped_rows > 0 {
        return Err(Error::DegenerateRow(0));
    }
    Ok(out)
}

/// The `k` nearest pseudo-points of one query and their interpolation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagationNeighbors {
    pub neighbor_indices: Vec<usize>,
    pub distances: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Inverse-distance weights; a zero distance takes all the weight, the
/// lowest index first. `indices` must be sorted by `(distance, index)`.
pub fn inverse_distance_weights(indices: Vec<usize>, distances: Vec<f64>) -> PropagationNeighbors {
    let weights = match distances.iter().position(|&d| d == 0.0) {
        Some(hit) => (0..distances.len()).map(|l| if l == hit { 1.0 } else { 0.0 }).collect(),
        None => {
            let inv: Vec<f64> = distances.iter().map(|d| 1.0 / d).collect();
            let total: f64 = inv.iter().sum();
            inv.iter().map(|v| v / total).collect()
        }
    };
    PropagationNeighbors {
        neighbor_indices: indices,
        distances,
        weights,
    }
}

/// Parameters of coordinate propagation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationParams {
    pub k: usize,
    /// Weight of the mean neighbor distance in the prior uncertainty.
    pub gamma: f64,
    /// Distance normalizer, the largest feature radius.
    pub r_max: f64,
}

/// Per current point: `p̃ = Σ w_l · inherited_world[m_l]` over its `k`
/// nearest pseudo-points, and uncertainty
/// `clamp(Σ w_l · ū[m_l] + γ · mean(d) / r_max, 0, 1)`.
pub fn propagate_coordinates(
    cloud_cur: &PointCloud,
    corr: &SoftCorrespondences,
    params: &PropagationParams,
) -> Result<(UncertainCoords, Vec<PropagationNeighbors>)> {
    if corr.is_empty() {
        return Err(Error::EmptyCorrespondences);
    }
    if params.k == 0 || params.k > corr.len() {
        return Err(Error::BadK {
            k: params.k,
            max: corr.len(),
        });
    }
    if !(params.gamma >= 0.0 && params.gamma.is_finite() && params.r_max > 0.0 && params.r_max.is_finite()) {
        return Err(Error::InvalidParameter("propagation: gamma must be >= 0 and r_max > 0".into()));
    }
    let tree = KdTree::new(&corr.pseudo_points);
    let neighbors: Vec<PropagationNeighbors> = cloud_cur
        .points()
        .par_iter()
        .map(|q| {
            let r = tree.nearest(q, params.k);
            inverse_distance_weights(r.indices, r.distances)
        })
        .collect();
    let (coords, uncertainty) = neighbors
        .iter()
        .map(|nb| {
            let mut p = nalgebra::Vector3::zeros();
            let mut u = 0.0;
            for (&m, &w) in nb.neighbor_indices.iter().zip(&nb.weights) {
                p += corr.inherited_world[m].coords * w;
                u += corr.inherited_uncertainty[m] * w;
            }
            let mean_d = nb.distances.iter().sum::<f64>() / nb.distances.len() as f64;
            (Point3::from(p), u + params.gamma * mean_d / params.r_max)
        })
        .unzip();
    Ok((UncertainCoords::new(coords, uncertainty, CoordRole::Prior)?, neighbors))
}

/// Regression plus uncertainty loss of the prior, labels recomputed from it.
pub fn pcg_losses(prior: &UncertainCoords, gt_coords: &[Point3], tau: f64) -> Result<LossValue> {
    ensure_same_len("prior/ground truth", prior.len(), gt_coords.len())?;
    let labels = label_uncertainty(prior.coords(), gt_coords, tau)?;
    let reg = loss_regression(prior.coords(), gt_coords)?;
    let un = loss_uncertainty(prior.uncertainty(), &labels)?;
    crate::gce::loss_gce(&reg, &un)
}
