use nalgebra::{Matrix3, Vector3, SVD};

use super::{PointCloud, Se3Pose};
use crate::error::ensure_same_len;
use crate::{Error, Result};

/// Relative size of the second singular value below which the
/// cross-covariance is treated as rank one (collinear or coincident points).
const RANK_TOLERANCE: f64 = 1e-10;

/// Weighted least-squares rigid transform taking `src` onto `dst`.
///
/// Minimizes `Σ w_i |R src_i + t - dst_i|²`. A reflection in the SVD
/// solution is removed by flipping the direction of the smallest singular
/// value, so the returned rotation always has determinant +1.
pub fn kabsch_align(src: &PointCloud, dst: &PointCloud, weights: Option<&[f64]>) -> Result<Se3Pose> {
    ensure_same_len("kabsch source/target", src.len(), dst.len())?;
    if let Some(w) = weights {
        ensure_same_len("kabsch weights", w.len(), src.len())?;
        if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidParameter("kabsch weights must be finite and nonnegative".into()));
        }
    }
    if src.len() < 3 {
        return Err(Error::DegenerateConfiguration("fewer than 3 point pairs"));
    }
    let weight = |i: usize| weights.map_or(1.0, |w| w[i]);
    let total: f64 = (0..src.len()).map(weight).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateConfiguration("weights sum to zero"));
    }

    let mut src_mean = Vector3::zeros();
    let mut dst_mean = Vector3::zeros();
    for i in 0..src.len() {
        src_mean += src[i].coords * weight(i);
        dst_mean += dst[i].coords * weight(i);
    }
    src_mean /= total;
    dst_mean /= total;

    let mut cov = Matrix3::zeros();
    for i in 0..src.len() {
        cov += (src[i].coords - src_mean) * (dst[i].coords - dst_mean).transpose() * weight(i);
    }

    let svd = SVD::new(cov, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge")),
    };
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]));
    let (largest, middle, smallest) = (s[order[0]], s[order[1]], order[2]);
    if !(largest > 0.0) || middle <= RANK_TOLERANCE * largest {
        return Err(Error::DegenerateConfiguration("cross-covariance has rank < 2"));
    }

    let v = v_t.transpose();
    let u_t = u.transpose();
    let mut correction = Vector3::repeat(1.0);
    if (v * u_t).determinant() < 0.0 {
        correction[smallest] = -1.0;
    }
    let rotation = v * Matrix3::from_diagonal(&correction) * u_t;
    let translation = dst_mean - rotation * src_mean;
    Ok(Se3Pose::from_parts_unchecked(rotation, translation))
}
