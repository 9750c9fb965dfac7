use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Point3;
use crate::{seed, Error, Result};

/// Square world of half-width `extent` centered on the origin: a flat ground
/// plane at z = 0, axis-aligned box buildings and a pool of transient clutter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub extent: f64,
    pub n_buildings: usize,
    /// Footprint side lengths are drawn uniformly from this range.
    pub building_size_range: [f64; 2],
    pub building_height_range: [f64; 2],
    /// Points per square meter.
    pub ground_density: f64,
    pub wall_density: f64,
    /// Fraction of every scan made of transient points.
    pub clutter_fraction: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            extent: 50.0,
            n_buildings: 30,
            building_size_range: [4.0, 12.0],
            building_height_range: [3.0, 10.0],
            ground_density: 1.0,
            wall_density: 1.0,
            clutter_fraction: 0.2,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("world: {m}")));
        if !(self.extent > 0.0 && self.extent.is_finite()) {
            return bad("extent must be positive");
        }
        if !(self.ground_density > 0.0 && self.wall_density > 0.0) {
            return bad("densities must be positive");
        }
        let [lo, hi] = self.building_size_range;
        if !(lo > 0.0 && lo <= hi && hi < self.extent) {
            return bad("building_size_range must satisfy 0 < min <= max < extent");
        }
        let [lo, hi] = self.building_height_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return bad("building_height_range must satisfy 0 < min <= max");
        }
        if !(0.0..1.0).contains(&self.clutter_fraction) {
            return bad("clutter_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Building {
    pub min: Point3,
    pub max: Point3,
}

impl Building {
    /// Distance from `p` to the nearest vertical face plane it lies within.
    pub fn wall_distance(&self, p: &Point3) -> f64 {
        let inside = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
        let mut best = f64::INFINITY;
        if inside(p.y, self.min.y, self.max.y) && inside(p.z, self.min.z, self.max.z) {
            best = best.min((p.x - self.min.x).abs()).min((p.x - self.max.x).abs());
        }
        if inside(p.x, self.min.x, self.max.x) && inside(p.z, self.min.z, self.max.z) {
            best = best.min((p.y - self.min.y).abs()).min((p.y - self.max.y).abs());
        }
        best
    }
}

/// World point set; `stable[i]` is false for transient clutter.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub points: Vec<Point3>,
    pub stable: Vec<bool>,
    pub buildings: Vec<Building>,
    /// Number of leading points that belong to the ground plane.
    pub n_ground: usize,
    /// Share of every scan that is transient clutter.
    pub clutter_fraction: f64,
}

impl World {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn clutter(&self) -> impl Iterator<Item = &Point3> {
        self.points.iter().zip(&self.stable).filter(|(_, &s)| !s).map(|(p, _)| p)
    }
}

/// Jittered grid over a `width × height` rectangle at `density` points/m²:
/// yields `(u, v)` offsets in [0, width) × [0, height).
fn jittered_grid<R: Rng>(rng: &mut R, width: f64, height: f64, density: f64) -> Vec<(f64, f64)> {
    let spacing = density.sqrt().recip();
    let nu = ((width / spacing).round() as usize).max(1);
    let nv = ((height / spacing).round() as usize).max(1);
    let (du, dv) = (width / nu as f64, height / nv as f64);
    let mut out = Vec::with_capacity(nu * nv);
    for i in 0..nu {
        for j in 0..nv {
            out.push((
                (i as f64 + rng.random::<f64>()) * du,
                (j as f64 + rng.random::<f64>()) * dv,
            ));
        }
    }
    out
}

pub fn generate_world(cfg: &WorldConfig, seed: u64) -> Result<World> {
    cfg.validate()?;
    let mut rng = seed::rng(seed);
    let e = cfg.extent;
    let mut points: Vec<Point3> = jittered_grid(&mut rng, 2.0 * e, 2.0 * e, cfg.ground_density)
        .into_iter()
        .map(|(u, v)| Point3::new(u - e, v - e, 0.0))
        .collect();
    let n_ground = points.len();

    let mut buildings = Vec::with_capacity(cfg.n_buildings);
    for _ in 0..cfg.n_buildings {
        let [lo, hi] = cfg.building_size_range;
        let (w, d) = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
        let [hlo, hhi] = cfg.building_height_range;
        let h = rng.random_range(hlo..=hhi);
        let x0 = rng.random_range(-e..=e - w);
        let y0 = rng.random_range(-e..=e - d);
        let b = Building {
            min: Point3::new(x0, y0, 0.0),
            max: Point3::new(x0 + w, y0 + d, h),
        };
        // four vertical faces; the fixed coordinate is copied from the box exactly
        for (along, fixed, on_x) in [(w, b.min.y, true), (w, b.max.y, true), (d, b.min.x, false), (d, b.max.x, false)] {
            for (u, z) in jittered_grid(&mut rng, along, h, cfg.wall_density) {
                points.push(if on_x {
                    Point3::new(x0 + u, fixed, z)
                } else {
                    Point3::new(fixed, y0 + u, z)
                });
            }
        }
        buildings.push(b);
    }
    let n_stable = points.len();
    let mut stable = vec![true; n_stable];

    let n_clutter =
        (n_stable as f64 * cfg.clutter_fraction / (1.0 - cfg.clutter_fraction)).round() as usize;
    for _ in 0..n_clutter {
        points.push(Point3::new(
            rng.random_range(-e..e),
            rng.random_range(-e..e),
            rng.random_range(0.2..2.0),
        ));
    }
    stable.resize(points.len(), false);
    Ok(World {
        points,
        stable,
        buildings,
        n_ground,
        clutter_fraction: cfg.clutter_fraction,
    })
}
