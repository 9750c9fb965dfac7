//! Plain-text point cloud format: a `x y z` header line, then one point per
//! line as three space-separated decimals printed in shortest round-trip form.

use super::{Point3, PointCloud};
use crate::{Error, Result};

pub const CLOUD_HEADER: &str = "x y z";

pub fn write_cloud(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(CLOUD_HEADER.len() + 1 + cloud.len() * 32);
    out.push_str(CLOUD_HEADER);
    out.push('\n');
    for p in cloud {
        out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
    }
    out
}

pub fn parse_cloud(text: &str) -> Result<PointCloud> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, CLOUD_HEADER)) => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{CLOUD_HEADER}`"),
            })
        }
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(' ').collect();
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 fields, found {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (slot, field) in xyz.iter_mut().zip(&fields) {
            *slot = field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(format!("invalid number `{field}`")))?;
        }
        points.push(Point3::new(xyz[0], xyz[1], xyz[2]));
    }
    PointCloud::new(points)
}
