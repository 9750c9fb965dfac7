//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use seqloc::gce::{loss_regression, loss_uncertainty, CoordRole, UncertainCoords};
use seqloc::geometry::Point3;
use seqloc::ucf::{loss_full_with_gradients, loss_fuse, LossWeights};

/// Central-difference step.
pub const H: f64 = 1e-6;

pub fn brute_force_knn(query: &Point3, reference: &[Point3], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = reference
        .iter()
        .enumerate()
        .map(|(i, p)| (nalgebra::distance(query, p), i))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// All-pairs inverse-distance propagation of world coordinates and the prior
/// uncertainty rule.
pub fn brute_force_propagation(
    queries: &[Point3],
    pseudo: &[Point3],
    world: &[Point3],
    unc: &[f64],
    k: usize,
    gamma: f64,
    r_max: f64,
) -> Vec<(Point3, f64)> {
    queries
        .iter()
        .map(|q| {
            let nearest = brute_force_knn(q, pseudo, k);
            let weights: Vec<f64> = match nearest.iter().position(|e| e.0 == 0.0) {
                Some(z) => (0..k).map(|l| if l == z { 1.0 } else { 0.0 }).collect(),
                None => {
                    let total: f64 = nearest.iter().map(|e| 1.0 / e.0).sum();
                    nearest.iter().map(|e| (1.0 / e.0) / total).collect()
                }
            };
            let mut p = Vector3::zeros();
            let mut u = 0.0;
            for (l, &(_, idx)) in nearest.iter().enumerate() {
                p += world[idx].coords * weights[l];
                u += unc[idx] * weights[l];
            }
            let mean_d = nearest.iter().map(|e| e.0).sum::<f64>() / k as f64;
            (Point3::from(p), (u + gamma * mean_d / r_max).clamp(0.0, 1.0))
        })
        .collect()
}

/// Relative error with a floor for gradients that are zero on both sides.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < 1e-9 {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

fn central(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    (f(x + H) - f(x - H)) / (2.0 * H)
}

fn residual<R: Rng>(rng: &mut R) -> f64 {
    let m = rng.random_range(0.05..0.8);
    if rng.random::<bool>() {
        m
    } else {
        -m
    }
}

#[derive(Clone)]
/// A random instance whose residuals and label margins keep every loss
/// smooth within a few `H` of the sampled point.
pub struct FusionInstance {
    pub gt: Vec<Point3>,
    pub prior: Vec<Point3>,
    pub prior_u: Vec<f64>,
    pub meas: Vec<Point3>,
    pub meas_u: Vec<f64>,
    pub tau: f64,
}

impl FusionInstance {
    pub fn prior_coords(&self) -> UncertainCoords {
        UncertainCoords::new(self.prior.clone(), self.prior_u.clone(), CoordRole::Prior).unwrap()
    }

    pub fn meas_coords(&self) -> UncertainCoords {
        UncertainCoords::new(self.meas.clone(), self.meas_u.clone(), CoordRole::Measurement).unwrap()
    }

    fn fused(&self) -> Vec<Point3> {
        (0..self.gt.len())
            .map(|i| {
                let (a, b) = softmax2(-self.prior_u[i], -self.meas_u[i]);
                Point3::from(self.prior[i].coords * a + self.meas[i].coords * b)
            })
            .collect()
    }

    fn smooth(&self) -> bool {
        let l1 = |p: &Point3, g: &Point3| (p - g).abs().sum();
        let fused = self.fused();
        (0..self.gt.len()).all(|i| {
            let ok_res = (fused[i] - self.gt[i]).iter().all(|r| r.abs() > 1e-3);
            let ok_tau = [fused[i], self.prior[i], self.meas[i]]
                .iter()
                .all(|p| (l1(p, &self.gt[i]) - self.tau).abs() > 1e-3);
            ok_res && ok_tau
        })
    }

    pub fn sample(rng: &mut ChaCha8Rng, m: usize) -> Self {
        loop {
            let gt: Vec<Point3> = (0..m)
                .map(|_| Point3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0)))
                .collect();
            let offset = |rng: &mut ChaCha8Rng, g: &Point3| g + Vector3::new(residual(rng), residual(rng), residual(rng));
            let prior = gt.iter().map(|g| offset(rng, g)).collect();
            let meas = gt.iter().map(|g| offset(rng, g)).collect();
            let inst = Self {
                prior,
                meas,
                prior_u: (0..m).map(|_| rng.random_range(0.05..0.95)).collect(),
                meas_u: (0..m).map(|_| rng.random_range(0.05..0.95)).collect(),
                gt,
                tau: rng.random_range(0.8..2.0),
            };
            if inst.smooth() {
                return inst;
            }
        }
    }
}

pub fn softmax2(a: f64, b: f64) -> (f64, f64) {
    let m = a.max(b);
    let (ea, eb) = ((a - m).exp(), (b - m).exp());
    (ea / (ea + eb), eb / (ea + eb))
}

/// Largest relative gradient error of the uncertainty loss on one instance.
pub fn check_uncertainty_loss(rng: &mut ChaCha8Rng) -> f64 {
    let m = 8;
    let labels: Vec<f64> = (0..m).map(|_| rng.random_range(0..2) as f64).collect();
    let pred: Vec<f64> = labels.iter().map(|l| (l + residual(rng)).clamp(-0.5, 1.5)).collect();
    let analytic = loss_uncertainty(&pred, &labels).unwrap().grad_uncertainty;
    (0..m)
        .map(|i| {
            let f = |x: f64| {
                let mut p = pred.clone();
                p[i] = x;
                loss_uncertainty(&p, &labels).unwrap().value
            };
            rel_err(analytic[i], central(&f, pred[i]))
        })
        .fold(0.0, f64::max)
}

/// Largest relative gradient error of the regression loss on one instance.
pub fn check_regression_loss(rng: &mut ChaCha8Rng) -> f64 {
    let m = 8;
    let gt: Vec<Point3> = (0..m).map(|_| Point3::new(rng.random(), rng.random(), rng.random())).collect();
    let pred: Vec<Point3> = gt
        .iter()
        .map(|g| g + Vector3::new(residual(rng), residual(rng), residual(rng)))
        .collect();
    let analytic = loss_regression(&pred, &gt).unwrap().grad_coords;
    let mut worst: f64 = 0.0;
    for i in 0..m {
        for k in 0..3 {
            let f = |x: f64| {
                let mut p = pred.clone();
                p[i][k] = x;
                loss_regression(&p, &gt).unwrap().value
            };
            worst = worst.max(rel_err(analytic[i][k], central(&f, pred[i][k])));
        }
    }
    worst
}

/// Which scalar loss of a fusion instance to differentiate.
#[derive(Clone, Copy)]
pub enum FusionObjective {
    Fused,
    Full,
}

/// Largest relative gradient error over every coordinate and uncertainty of
/// both fusion inputs.
pub fn check_fusion_loss(rng: &mut ChaCha8Rng, objective: FusionObjective) -> f64 {
    let inst = FusionInstance::sample(rng, 5);
    let w = LossWeights::default();
    let eval = |i: &FusionInstance| {
        let (p, m) = (i.prior_coords(), i.meas_coords());
        match objective {
            FusionObjective::Fused => loss_fuse(&p, &m, &i.gt, i.tau).unwrap(),
            FusionObjective::Full => loss_full_with_gradients(&m, &p, &i.gt, i.tau, &w).unwrap(),
        }
    };
    let g = eval(&inst);
    let mut worst: f64 = 0.0;
    for i in 0..inst.gt.len() {
        for k in 0..3 {
            let fp = |x: f64| {
                let mut c = inst.clone();
                c.prior[i][k] = x;
                eval(&c).value
            };
            let fm = |x: f64| {
                let mut c = inst.clone();
                c.meas[i][k] = x;
                eval(&c).value
            };
            worst = worst.max(rel_err(g.grad_prior_coords[i][k], central(&fp, inst.prior[i][k])));
            worst = worst.max(rel_err(g.grad_meas_coords[i][k], central(&fm, inst.meas[i][k])));
        }
        let fu = |x: f64| {
            let mut c = inst.clone();
            c.prior_u[i] = x;
            eval(&c).value
        };
        let fv = |x: f64| {
            let mut c = inst.clone();
            c.meas_u[i] = x;
            eval(&c).value
        };
        worst = worst.max(rel_err(g.grad_prior_uncertainty[i], central(&fu, inst.prior_u[i])));
        worst = worst.max(rel_err(g.grad_meas_uncertainty[i], central(&fv, inst.meas_u[i])));
    }
    worst
}

/// A uniformly random rotation (via a random unit quaternion) and a
/// translation in a 100 m cube.
pub fn random_pose(rng: &mut ChaCha8Rng) -> seqloc::geometry::Se3Pose {
    let q: nalgebra::Vector4<f64> = loop {
        let v = nalgebra::Vector4::<f64>::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            break v / n;
        }
    };
    let uq = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]));
    let t = Vector3::new(
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
        rng.random_range(-50.0..50.0),
    );
    seqloc::geometry::Se3Pose::new(*uq.to_rotation_matrix().matrix(), t).unwrap()
}

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A planted RANSAC problem: `n` sensor points in a 40 m cube, world
/// coordinates under `pose` with Gaussian noise, and a fraction displaced by
/// at least `outlier_min` meters.
pub struct PlantedTrial {
    pub pose: seqloc::geometry::Se3Pose,
    pub local: Vec<Point3>,
    pub global: Vec<Point3>,
    pub is_outlier: Vec<bool>,
}

impl PlantedTrial {
    pub fn sample(rng: &mut ChaCha8Rng, n: usize, outlier_fraction: f64, sigma: f64, outlier_min: f64) -> Self {
        use rand_distr::{Distribution, Normal};
        let pose = random_pose(rng);
        let n_out = (n as f64 * outlier_fraction).round() as usize;
        let mut local = Vec::with_capacity(n);
        let mut global = Vec::with_capacity(n);
        let is_outlier: Vec<bool> = (0..n).map(|i| i < n_out).collect();
        let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).unwrap();
        for &outlier in &is_outlier {
            let l = Point3::new(
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
                rng.random_range(-20.0..20.0),
            );
            let mut g = pose.transform_point(&l);
            if sigma > 0.0 {
                g += Vector3::new(noise.sample(rng), noise.sample(rng), noise.sample(rng));
            }
            if outlier {
                g += random_unit(rng) * rng.random_range(outlier_min..3.0 * outlier_min);
            }
            local.push(l);
            global.push(g);
        }
        Self { pose, local, global, is_outlier }
    }

    pub fn correspondences(&self) -> seqloc::pose_solver::CorrespondenceSet {
        let cloud = seqloc::geometry::PointCloud::new(self.local.clone()).unwrap();
        seqloc::pose_solver::CorrespondenceSet::new(cloud, self.global.clone(), vec![0.0; self.local.len()]).unwrap()
    }
}
