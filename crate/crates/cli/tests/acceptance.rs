//! Acceptance suite: one PASS/FAIL line per criterion. Exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use seqloc::gce::{label_uncertainty, TauSchedule};
use seqloc::geometry::{knn_search, Point3, PointCloud};
use seqloc::pcg::*;
use seqloc::pipeline::Mode;
use seqloc::pose_solver::{evaluate_pose, ransac_pose, RansacConfig};
use seqloc::ucf::fusion_weights;
use seqloc_cli::{ablate, load_config, load_frames, run, CliConfig};

#[path = "../../core/tests/support/mod.rs"]
mod support;
use support::*;

type Check = fn() -> Outcome;

struct Outcome {
    pass: bool,
    detail: String,
}

fn stress_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/stress.toml")
}

fn stress(seed: u64) -> CliConfig {
    load_config(Some(&stress_config_path()), Some(seed), None).expect("stress config loads")
}

fn within_budget(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn row_sum_error(a: &AttentionMatrix) -> f64 {
    (0..a.rows())
        .map(|i| (a.row(i).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn random_features(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> FeatureMatrix {
    loop {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        if let Ok(f) = FeatureMatrix::from_rows(&rows, 0) {
            return f;
        }
    }
}

fn normalization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let instances = 10_000;
    let mut worst = 0.0f64;
    for i in 0..instances {
        let n = rng.random_range(1..24);
        let m = rng.random_range(1..24);
        let dim = rng.random_range(1..10);
        let temperature = [1.0, 0.3, 0.1, 0.01][i % 4];
        let prev = random_features(&mut rng, n, dim);
        let cur = random_features(&mut rng, m, dim);
        let s = self_attention_with_temperature(&cur, temperature).unwrap();
        let c = cross_attention_with_temperature(&prev, &cur, temperature).unwrap();
        let g = global_attention(std::slice::from_ref(&c)).unwrap();
        worst = worst.max(row_sum_error(&s)).max(row_sum_error(&c)).max(row_sum_error(&g));

        let scale = [1.0, 1e3, 1e300][i % 3];
        let up: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let um: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0) * scale).collect();
        let w = fusion_weights(&up, &um).unwrap();
        for (a, b) in w.alpha.iter().zip(&w.beta) {
            worst = worst.max((a + b - 1.0).abs());
        }

        let k = rng.random_range(1..8);
        let distances: Vec<f64> = (0..k)
            .map(|_| if rng.random_range(0..20) == 0 { 0.0 } else { rng.random_range(1e-6..30.0) })
            .collect();
        let nb = inverse_distance_weights((0..k).collect(), distances);
        worst = worst.max((nb.weights.iter().sum::<f64>() - 1.0).abs());
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst <= 1e-12 && within_budget(elapsed, 10.0),
        detail: format!("{instances} instances, worst |sum - 1| = {worst:.2e}, {:.2} s", elapsed.as_secs_f64()),
    }
}

fn exact_recovery() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut worst_t, mut worst_r, mut recovered) = (0.0f64, 0.0f64, 0);
    for seed in 0..100 {
        let trial = PlantedTrial::sample(&mut rng, 10, 0.0, 0.0, 5.0);
        let cfg = RansacConfig { seed, ..RansacConfig::default() };
        if let Ok(est) = ransac_pose(&trial.correspondences(), &cfg) {
            let (t, r) = evaluate_pose(&est.pose, &trial.pose);
            worst_t = worst_t.max(t);
            worst_r = worst_r.max(r);
            if t <= 1e-9 && r <= 1e-6 {
                recovered += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: recovered == 100 && within_budget(elapsed, 5.0),
        detail: format!(
            "{recovered}/100 recovered, worst {worst_t:.2e} m / {worst_r:.2e} deg, {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn ransac_robustness() -> Outcome {
    let start = Instant::now();
    let mut successes = 0;
    let mut refined_ok = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let trial = PlantedTrial::sample(&mut rng, 500, 0.4, 0.02, 5.0);
        let cfg = RansacConfig { iterations: 1000, inlier_threshold: 0.1, seed, ..RansacConfig::default() };
        let Ok(est) = ransac_pose(&trial.correspondences(), &cfg) else {
            continue;
        };
        let (t, r) = evaluate_pose(&est.pose, &trial.pose);
        let leaked = est.inlier_mask.iter().zip(&trial.is_outlier).any(|(m, o)| *m && *o);
        if t <= 0.05 && r <= 0.1 && !leaked {
            successes += 1;
        }
        if est.inlier_count >= est.hypothesis_inliers {
            refined_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: successes >= 95 && refined_ok == 100 && within_budget(elapsed, 60.0),
        detail: format!(
            "{successes}/100 seeds within 0.05 m / 0.1 deg with no outlier kept, refined count >= hypothesis count in {refined_ok}/100, {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = [0.0f64; 4];
    for _ in 0..100 {
        worst[0] = worst[0].max(check_uncertainty_loss(&mut rng));
        worst[1] = worst[1].max(check_regression_loss(&mut rng));
        worst[2] = worst[2].max(check_fusion_loss(&mut rng, FusionObjective::Fused));
        worst[3] = worst[3].max(check_fusion_loss(&mut rng, FusionObjective::Full));
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: worst.iter().all(|&w| w <= 1e-5) && within_budget(elapsed, 10.0),
        detail: format!(
            "worst relative error: uncertainty {:.1e}, regression {:.1e}, fused {:.1e}, total {:.1e}, {:.2} s",
            worst[0],
            worst[1],
            worst[2],
            worst[3],
            elapsed.as_secs_f64()
        ),
    }
}

fn schedule_and_labels() -> Outcome {
    let s = TauSchedule::default();
    let taus: Vec<f64> = [0, 5, 6, 11, 12].iter().map(|&e| s.tau_at_epoch(e)).collect();
    let expected = [1.0, 1.0, 0.7, 0.7, 0.49];
    let schedule_ok = taus.iter().zip(expected).all(|(t, e)| (t - e).abs() <= 1e-15);
    let gt = [Point3::origin()];
    let label = |p: Point3, tau: f64| label_uncertainty(&[p], &gt, tau).unwrap()[0];
    // L1 errors of 0.5 exactly, just below and just above, at tau = 0.5
    let below = 0.5f64.next_down();
    let boundary_ok = label(Point3::new(0.25, -0.125, 0.125), 0.5) == 1.0
        && label(Point3::new(below, 0.0, 0.0), 0.5) == 0.0
        && label(Point3::new(0.5f64.next_up(), 0.0, 0.0), 0.5) == 1.0
        && label(Point3::new(0.7, 0.0, 0.0), s.tau_at_epoch(6)) == 1.0
        && label(Point3::new(0.69, 0.0, 0.0), s.tau_at_epoch(6)) == 0.0;
    Outcome {
        pass: schedule_ok && boundary_ok,
        detail: format!("tau at epochs 0/5/6/11/12 = {taus:?}, strict boundary {}", if boundary_ok { "ok" } else { "wrong" }),
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    let point = |rng: &mut ChaCha8Rng| {
        Point3::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0), rng.random_range(-3.0..3.0))
    };
    for _ in 0..200 {
        let n = rng.random_range(1..=1000);
        let mut pts: Vec<Point3> = (0..n).map(|_| point(&mut rng)).collect();
        // duplicates exercise the tie-breaking rule
        for i in 0..n / 20 {
            pts[n - 1 - i] = pts[i];
        }
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let k = rng.random_range(1..=n.min(16));
        let queries: Vec<Point3> = (0..20).map(|_| point(&mut rng)).chain([pts[0]]).collect();
        for q in &queries {
            let fast = knn_search(q, &cloud, k).unwrap();
            let slow = brute_force_knn(q, &pts, k);
            if fast.indices != slow.iter().map(|e| e.1).collect::<Vec<_>>() {
                mismatches += 1;
            }
            for (d, e) in fast.distances.iter().zip(&slow) {
                worst = worst.max((d - e.0).abs());
            }
        }

        let world: Vec<Point3> = (0..n).map(|_| point(&mut rng)).collect();
        let unc: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let corr = SoftCorrespondences {
            pseudo_points: pts.clone(),
            inherited_world: world.clone(),
            inherited_uncertainty: unc.clone(),
            source_index: (0..n).collect(),
            dropped_rows: 0,
        };
        let params = PropagationParams { k, gamma: 0.5, r_max: 2.0 };
        let qcloud = PointCloud::new(queries.clone()).unwrap();
        let (prior, _) = propagate_coordinates(&qcloud, &corr, &params).unwrap();
        let oracle = brute_force_propagation(&queries, &pts, &world, &unc, k, 0.5, 2.0);
        for (j, (p, u)) in oracle.iter().enumerate() {
            worst = worst.max((prior.coords()[j] - p).norm()).max((prior.uncertainty()[j] - u).abs());
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        pass: mismatches == 0 && worst <= 1e-12 && within_budget(elapsed, 60.0),
        detail: format!(
            "200 clouds, {mismatches} index mismatches, worst deviation {worst:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn convexity() -> Outcome {
    let mut cfg = stress(0);
    cfg.pipeline.mode = Mode::Full;
    let frames = load_frames(&cfg, None).unwrap();
    let result = run(&cfg, &frames).unwrap();
    let (mut checked, mut outside) = (0usize, 0usize);
    for f in &result.frames {
        let Some(corr) = &f.correspondences else {
            continue;
        };
        let (lo, hi) = f.local.bounding_box().unwrap();
        for p in &corr.pseudo_points {
            checked += 1;
            if (0..3).any(|a| p[a] < lo[a] - 1e-12 || p[a] > hi[a] + 1e-12) {
                outside += 1;
            }
        }
    }
    Outcome {
        pass: outside == 0 && checked > 0 && result.frames.len() == 100,
        detail: format!("{} frames, {checked} pseudo-points, {outside} outside the box", result.frames.len()),
    }
}

fn ablation_direction() -> Outcome {
    let start = Instant::now();
    let mut ratios = Vec::new();
    let mut between = 0;
    for seed in 0..20 {
        let cfg = stress(seed);
        let frames = load_frames(&cfg, None).unwrap();
        let rows = ablate(&cfg, &frames).unwrap();
        let mean_t = |mode: Mode| {
            rows.iter()
                .find(|r| r.0 == mode)
                .and_then(|r| r.2)
                .map_or(f64::INFINITY, |a| a.mean_t)
        };
        let (only, conf, full) = (mean_t(Mode::MeasurementOnly), mean_t(Mode::MeasurementConf), mean_t(Mode::Full));
        ratios.push(full / only);
        if full < conf && conf < only {
            between += 1;
        }
    }
    ratios.sort_by(f64::total_cmp);
    let median = ratios[(ratios.len() - 1) / 2];
    let elapsed = start.elapsed();
    Outcome {
        pass: median <= 0.9 && between >= 14 && within_budget(elapsed, 300.0),
        detail: format!(
            "median full/measurement_only = {median:.3}, measurement_conf between in {between}/20, {:.1} s",
            elapsed.as_secs_f64()
        ),
    }
}

fn digest(path: &Path) -> String {
    Sha256::digest(std::fs::read(path).unwrap()).iter().map(|b| format!("{b:02x}")).collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let config = stress_config_path();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).max(4).to_string();
    let mut digests = Vec::new();
    for (i, t) in ["1", "1", threads.as_str(), threads.as_str()].iter().enumerate() {
        let out = dir.path().join(i.to_string());
        let status = Command::new(env!("CARGO_BIN_EXE_seqloc"))
            .args(["ablate", "--config", config.to_str().unwrap(), "--seed", "7", "--threads", t])
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap()
            .status;
        if !status.success() {
            return Outcome { pass: false, detail: format!("ablate exited with {status}") };
        }
        digests.push((digest(&out.join("ablation.csv")), digest(&out.join("ablation.json"))));
    }
    let same = digests.iter().all(|d| *d == digests[0]);
    Outcome {
        pass: same,
        detail: format!("4 runs at 1 and {threads} threads, ablation.csv sha256 {}", &digests[0].0[..16]),
    }
}

fn main() {
    let criteria: [(&str, Check); 9] = [
        ("normalization", normalization),
        ("exact pose recovery", exact_recovery),
        ("RANSAC robustness", ransac_robustness),
        ("gradient suite", gradients),
        ("schedule and labeling", schedule_and_labels),
        ("oracle equivalence", oracle_equivalence),
        ("soft correspondence convexity", convexity),
        ("ablation direction", ablation_direction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let o = check();
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
