//! Temporal LiDAR relocalization.
//!
//! Each scan is turned into local-to-world 3D correspondences in four stages:
//!
//! 1. [`gce`]: per-point global coordinates with an uncertainty score (the
//!    "measurement"), produced by a pluggable predictor.
//! 2. [`pcg`]: cosine-similarity attention between consecutive scans yields
//!    soft correspondences, which carry the previous frame's world coordinates
//!    forward as a "prior".
//! 3. [`ucf`]: per-point softmax fusion of prior and measurement by their
//!    uncertainties.
//! 4. [`pose_solver`]: RANSAC over Kabsch fits on the fused correspondences.
//!
//! [`simulator`] provides synthetic worlds and scans with exact ground truth,
//! and [`pipeline`] runs the whole chain frame by frame.

// NaN-rejecting checks are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gce;
pub mod geometry;
pub mod pcg;
pub mod pipeline;
pub mod pose_solver;
pub mod seed;
pub mod simulator;
pub mod ucf;

pub use error::{Error, Result};
