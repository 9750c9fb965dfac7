use std::collections::BTreeMap;

use super::{Point3, PointCloud};
use crate::{Error, Result};

/// Member indices of every occupied voxel, in ascending lexicographic voxel
/// order `(ix, iy, iz)` with `i = floor(coord / voxel_size)`. Members keep
/// their original relative order.
pub fn voxel_groups(cloud: &PointCloud, voxel_size: f64) -> Result<Vec<Vec<usize>>> {
    if !(voxel_size > 0.0) || !voxel_size.is_finite() {
        return Err(Error::NonPositiveVoxel(voxel_size));
    }
    let mut bins: BTreeMap<(i64, i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in cloud.iter().enumerate() {
        let key = (
            (p.x / voxel_size).floor() as i64,
            (p.y / voxel_size).floor() as i64,
            (p.z / voxel_size).floor() as i64,
        );
        bins.entry(key).or_default().push(i);
    }
    Ok(bins.into_values().collect())
}

/// Mean of the indexed points, summed in the given order.
pub(crate) fn centroid_of(points: &[Point3], members: &[usize]) -> Point3 {
    let sum = members
        .iter()
        .fold(nalgebra::Vector3::zeros(), |acc, &i| acc + points[i].coords);
    Point3::from(sum / members.len() as f64)
}

/// One centroid per occupied voxel.
pub fn voxel_downsample(cloud: &PointCloud, voxel_size: f64) -> Result<PointCloud> {
    let groups = voxel_groups(cloud, voxel_size)?;
    Ok(PointCloud::from_vec_unchecked(
        groups.iter().map(|g| centroid_of(cloud.points(), g)).collect(),
    ))
}
