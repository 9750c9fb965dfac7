//! Comma-separated output tables. Numbers use Rust's shortest round-trip
//! decimal form, so parsing a cell yields the exact emitted value.

use std::fmt::Write;

use nalgebra::{Rotation3, UnitQuaternion};

use seqloc::geometry::Se3Pose;
use seqloc::pipeline::{FrameOutput, Mode, TrajectoryReport};
use seqloc::pose_solver::ErrorAggregates;

use crate::CliError;

pub const TRAJECTORY_HEADER: &str =
    "frame,tx,ty,tz,qw,qx,qy,qz,gt_tx,gt_ty,gt_tz,gt_qw,gt_qx,gt_qy,gt_qz,trans_err_m,rot_err_deg";
pub const POINTS_HEADER: &str = "frame,x,y,z,u_meas,u_prior,u_fused";
pub const ABLATION_HEADER: &str = "mode,mean_t,mean_r,median_t,median_r,seed";

/// Unit quaternion `(w, x, y, z)` with `w >= 0`.
pub fn canonical_quaternion(pose: &Se3Pose) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*pose.rotation()));
    let s = if q.w < 0.0 { -1.0 } else { 1.0 };
    [s * q.w, s * q.i, s * q.j, s * q.k]
}

fn pose_cells(pose: &Se3Pose) -> String {
    let t = pose.translation();
    let q = canonical_quaternion(pose);
    format!("{},{},{},{},{},{},{}", t.x, t.y, t.z, q[0], q[1], q[2], q[3])
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per frame; pose and error cells are empty for failed frames.
pub fn trajectory_table(report: &TrajectoryReport) -> String {
    let mut out = format!("{TRAJECTORY_HEADER}\n");
    for f in &report.per_frame {
        let pred = f.pose.as_ref().map(pose_cells).unwrap_or_else(|| ",,,,,,".into());
        writeln!(
            out,
            "{},{pred},{},{},{}",
            f.t,
            pose_cells(&f.gt_pose),
            opt(f.translation_error),
            opt(f.rotation_error)
        )
        .unwrap();
    }
    out
}

/// Sensor-frame downsampled points with their three uncertainties. Prior
/// and fused cells are empty outside `full` mode; the prior is also empty on
/// the first frame.
pub fn points_table(mode: Mode, frames: &[FrameOutput]) -> String {
    let mut out = format!("{POINTS_HEADER}\n");
    for f in frames {
        for (i, p) in f.local.iter().enumerate() {
            let (prior, fused) = if mode == Mode::Full {
                (
                    opt(f.prior.as_ref().map(|c| c.uncertainty()[i])),
                    f.fused.uncertainty()[i].to_string(),
                )
            } else {
                (String::new(), String::new())
            };
            writeln!(
                out,
                "{},{},{},{},{},{prior},{fused}",
                f.t,
                p.x,
                p.y,
                p.z,
                f.measurement.uncertainty()[i]
            )
            .unwrap();
        }
    }
    out
}

pub fn ablation_table(rows: &[(Mode, Option<ErrorAggregates>)], seed: u64) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for (mode, agg) in rows {
        let cells = agg
            .map(|a| format!("{},{},{},{}", a.mean_t, a.mean_r, a.median_t, a.median_r))
            .unwrap_or_else(|| ",,,".into());
        writeln!(out, "{mode},{cells},{seed}").unwrap();
    }
    out
}

/// Per-frame errors read back from a trajectory table; `None` marks a
/// failed frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub frame: usize,
    pub errors: Option<(f64, f64)>,
}

pub fn parse_trajectory_table(text: &str) -> Result<Vec<TrajectoryRow>, CliError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == TRAJECTORY_HEADER => {}
        _ => {
            return Err(CliError::Parse {
                line: 1,
                message: format!("expected header `{TRAJECTORY_HEADER}`"),
            })
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| CliError::Parse { line: line_no, message };
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != 17 {
            return Err(bad(format!("expected 17 fields, found {}", cells.len())));
        }
        let frame = cells[0]
            .parse::<usize>()
            .map_err(|e| bad(format!("frame: {e}")))?;
        let num = |s: &str, name: &str| -> Result<Option<f64>, CliError> {
            if s.is_empty() {
                return Ok(None);
            }
            let v: f64 = s.parse().map_err(|e| bad(format!("{name}: {e}")))?;
            if v.is_finite() {
                Ok(Some(v))
            } else {
                Err(bad(format!("{name}: not finite")))
            }
        };
        for (k, cell) in cells.iter().enumerate().skip(1).take(14) {
            num(cell, &format!("column {}", k + 1))?;
        }
        let errors = match (num(cells[15], "trans_err_m")?, num(cells[16], "rot_err_deg")?) {
            (Some(t), Some(r)) => Some((t, r)),
            (None, None) => None,
            _ => return Err(bad("error columns must be both present or both empty".into())),
        };
        if rows.iter().any(|r: &TrajectoryRow| r.frame == frame) {
            return Err(bad(format!("duplicate frame {frame}")));
        }
        rows.push(TrajectoryRow { frame, errors });
    }
    Ok(rows)
}
