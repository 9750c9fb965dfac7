//! Point clouds, rigid transforms and the spatial queries the rest of the
//! pipeline is built on.

mod io;
mod kabsch;
mod kdtree;
mod voxel;

pub use io::{parse_cloud, write_cloud};
pub use kabsch::kabsch_align;
pub use kdtree::{knn_search, KdTree, KnnResult};
pub use voxel::{voxel_downsample, voxel_groups};
pub(crate) use voxel::centroid_of;

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Point3 = nalgebra::Point3<f64>;

/// Tolerance for the orthonormality and determinant checks on rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Ordered list of finite points. Index identity is meaningful: downstream
/// correspondences refer to points by position in the cloud.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if points.iter().any(|p| !p.coords.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("point cloud"));
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Caller guarantees every coordinate is finite.
    pub(crate) fn from_vec_unchecked(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(|p| p.coords.iter().all(|c| c.is_finite())));
        Self { points }
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    /// Axis-aligned bounding box as (min, max), or `None` for an empty cloud.
    pub fn bounding_box(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| {
            (lo.inf(p), hi.sup(p))
        }))
    }
}

impl std::ops::Index<usize> for PointCloud {
    type Output = Point3;

    fn index(&self, i: usize) -> &Point3 {
        &self.points[i]
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;

    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

/// Rigid transform `p' = R p + t` (sensor to world when used as a scan pose).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPose", into = "RawPose")]
pub struct Se3Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Se3Pose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("pose"));
        }
        let gram = rotation.transpose() * rotation;
        let orthonormal = (gram - Matrix3::identity())
            .iter()
            .all(|e| e.abs() <= ROTATION_TOLERANCE);
        if !orthonormal || (rotation.determinant() - 1.0).abs() > ROTATION_TOLERANCE {
            return Err(Error::InvalidParameter(
                "rotation is not proper orthonormal".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), Vector3::zeros())
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::from_parts_unchecked(Matrix3::identity(), translation)
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_normalize(axis), angle);
        Self::from_parts_unchecked(*rotation.matrix(), translation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn transform_point(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self::from_parts_unchecked(rt, -(rt * self.translation))
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Se3Pose) -> Self {
        Self::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    /// Row-major rotation followed by translation, the layout used in files.
    pub fn to_row_major(&self) -> ([f64; 9], [f64; 3]) {
        let r = &self.rotation;
        (
            [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            [self.translation.x, self.translation.y, self.translation.z],
        )
    }

    pub fn from_row_major(rotation: &[f64; 9], translation: &[f64; 3]) -> Result<Self> {
        Self::new(
            Matrix3::from_row_slice(rotation),
            Vector3::new(translation[0], translation[1], translation[2]),
        )
    }
}

#[derive(Serialize, Deserialize)]
struct RawPose {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<RawPose> for Se3Pose {
    type Error = Error;

    fn try_from(raw: RawPose) -> Result<Self> {
        Se3Pose::from_row_major(&raw.rotation, &raw.translation)
    }
}

impl From<Se3Pose> for RawPose {
    fn from(pose: Se3Pose) -> Self {
        let (rotation, translation) = pose.to_row_major();
        RawPose {
            rotation,
            translation,
        }
    }
}

/// `p' = R p + t` for every point, order preserved.
pub fn apply_pose(pose: &Se3Pose, cloud: &PointCloud) -> PointCloud {
    PointCloud::from_vec_unchecked(cloud.iter().map(|p| pose.transform_point(p)).collect())
}

/// Rotation angle of `r` in degrees, in [0, 180].
///
/// Evaluated as `atan2(|axis|, trace - 1)` where `|axis| = 2 sin θ` comes from
/// the skew part of `r`. For a rotation this equals
/// `acos(clamp((trace - 1) / 2))` but keeps full precision near 0°.
pub fn rotation_angle_deg(r: &Matrix3<f64>) -> f64 {
    let axis = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    );
    let cos2 = r[(0, 0)] + r[(1, 1)] + r[(2, 2)] - 1.0;
    axis.norm().atan2(cos2).to_degrees()
}

/// Elementary rotation about x by `deg` degrees.
pub fn rot_x(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

pub fn rot_y(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

pub fn rot_z(deg: f64) -> Matrix3<f64> {
    let (s, c) = deg.to_radians().sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}
