//! Line-delimited JSON sequence files.
//!
//! One frame per line:
//!
//! ```text
//! {"t":0,"pose":{"rotation":[r00,r01,...,r22],"translation":[tx,ty,tz]},"points":[x0,y0,z0,...],"gt_global":[X0,Y0,Z0,...]}
//! ```
//!
//! Rotations are row-major. `gt_global` may be empty when unknown. Numbers are
//! printed in shortest round-trip form, so parsing reproduces every bit.

use serde::{Deserialize, Serialize};

use super::ScanFrame;
use crate::geometry::{Point3, PointCloud, Se3Pose};
use crate::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: usize,
    pose: Se3Pose,
    points: Vec<f64>,
    gt_global: Vec<f64>,
}

fn flatten(points: &[Point3]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y, p.z]).collect()
}

fn unflatten(flat: &[f64], what: &str) -> std::result::Result<Vec<Point3>, String> {
    if !flat.len().is_multiple_of(3) {
        return Err(format!("{what} length {} is not a multiple of 3", flat.len()));
    }
    Ok(flat.chunks_exact(3).map(|c| Point3::new(c[0], c[1], c[2])).collect())
}

pub fn write_sequence_record(frame: &ScanFrame) -> String {
    let rec = FrameRecord {
        t: frame.index(),
        pose: *frame.gt_pose(),
        points: flatten(frame.local_points().points()),
        gt_global: frame.gt_global().map(flatten).unwrap_or_default(),
    };
    serde_json::to_string(&rec).expect("frame record serializes")
}

pub fn write_sequence(frames: &[ScanFrame]) -> String {
    let mut out = String::new();
    for f in frames {
        out.push_str(&write_sequence_record(f));
        out.push('\n');
    }
    out
}

/// Frames must appear in strictly increasing `t` order.
pub fn parse_sequence(text: &str) -> Result<Vec<ScanFrame>> {
    let mut frames: Vec<ScanFrame> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let rec: FrameRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if frames.last().is_some_and(|f| f.index() >= rec.t) {
            return Err(bad(format!("frame index {} out of order", rec.t)));
        }
        let local = unflatten(&rec.points, "points").map_err(bad)?;
        let gt = unflatten(&rec.gt_global, "gt_global").map_err(bad)?;
        let gt = (!gt.is_empty() || local.is_empty()).then_some(gt);
        let cloud = PointCloud::new(local).map_err(|e| bad(e.to_string()))?;
        frames.push(ScanFrame::new(rec.t, cloud, gt, rec.pose).map_err(|e| bad(e.to_string()))?);
    }
    Ok(frames)
}
