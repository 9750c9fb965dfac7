//! Command implementations behind the `seqloc` binary.
//!
//! Exit codes: 0 success, 2 configuration or parse error, 3 I/O error,
//! 4 pipeline failure on every frame.

pub mod config;
pub mod tables;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use seqloc::gce::{parse_predictions, CoordinatePredictor, SyntheticPredictor};
use seqloc::pipeline::{compute_losses, run_pipeline_with, FrameLosses, FrameReport, Mode, PipelineRun, PredictorKind};
use seqloc::pose_solver::{aggregate_errors, ErrorAggregates};
use seqloc::simulator::{parse_sequence, simulate_sequence, write_sequence, ScanFrame};

pub use config::CliConfig;
use tables::{ablation_table, parse_trajectory_table, points_table, trajectory_table, TrajectoryRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("every frame failed: {0}")]
    AllFramesFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Parse { .. } => 2,
            CliError::Io(_) => 3,
            CliError::Pipeline(_) | CliError::AllFramesFailed(_) => 4,
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn parse_error(e: seqloc::Error) -> CliError {
    match e {
        seqloc::Error::Parse { line, message } => CliError::Parse { line, message },
        other => CliError::Config(other.to_string()),
    }
}

/// Loads the configuration (defaults when `path` is `None`) and applies the
/// command-line overrides.
pub fn load_config(path: Option<&Path>, seed: Option<u64>, mode: Option<Mode>) -> Result<CliConfig, CliError> {
    let mut cfg = match path {
        Some(p) => CliConfig::parse(&read(p)?)?,
        None => CliConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = mode {
        cfg.pipeline.mode = m;
    }
    Ok(cfg)
}

/// Writes the simulated sequence; returns its frame count.
pub fn cmd_simulate(cfg: &CliConfig, out: &Path) -> Result<usize, CliError> {
    let frames = simulate_sequence(&cfg.simulation(), cfg.seed).map_err(|e| CliError::Config(e.to_string()))?;
    write(out, &write_sequence(&frames))?;
    Ok(frames.len())
}

/// Reads a sequence file, or simulates one from the configuration.
pub fn load_frames(cfg: &CliConfig, sequence: Option<&Path>) -> Result<Vec<ScanFrame>, CliError> {
    match sequence {
        Some(p) => parse_sequence(&read(p)?).map_err(parse_error),
        None => simulate_sequence(&cfg.simulation(), cfg.seed).map_err(|e| CliError::Config(e.to_string())),
    }
}

fn predictor(cfg: &CliConfig) -> Result<Box<dyn CoordinatePredictor>, CliError> {
    match cfg.pipeline.predictor {
        PredictorKind::Synthetic => Ok(Box::new(SyntheticPredictor {
            noise: cfg.pipeline.noise,
        })),
        PredictorKind::File => {
            let path = cfg
                .pipeline
                .predictions
                .as_deref()
                .ok_or_else(|| CliError::Config("pipeline.predictions is required when predictor = \"file\"".into()))?;
            Ok(Box::new(parse_predictions(&read(Path::new(path))?).map_err(parse_error)?))
        }
    }
}

/// The report file: the run's results plus the effective configuration.
#[derive(Debug, Serialize)]
pub struct RunReportFile<'a> {
    pub seed: u64,
    pub mode: Mode,
    pub failed_frames: usize,
    pub aggregates: Option<ErrorAggregates>,
    pub per_frame: &'a [FrameReport],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub losses: Option<Vec<FrameLosses>>,
    pub config: &'a CliConfig,
}

pub fn run(cfg: &CliConfig, frames: &[ScanFrame]) -> Result<PipelineRun, CliError> {
    let predictor = predictor(cfg)?;
    let run = run_pipeline_with(frames, &cfg.pipeline, cfg.seed, predictor.as_ref())
        .map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(run)
}

/// Paths written by [`cmd_run`].
pub struct RunOutputs {
    pub report: PathBuf,
    pub trajectory: PathBuf,
    pub points: PathBuf,
    pub config: PathBuf,
}

pub fn cmd_run(cfg: &CliConfig, frames: &[ScanFrame], out_dir: &Path) -> Result<RunOutputs, CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let result = run(cfg, frames)?;
    let report = &result.report;
    let losses = if cfg.pipeline.mode == Mode::Full && frames.iter().all(|f| f.gt_global().is_some()) {
        Some(compute_losses(&result, &cfg.pipeline).map_err(|e| CliError::Pipeline(e.to_string()))?)
    } else {
        None
    };
    let file = RunReportFile {
        seed: cfg.seed,
        mode: cfg.pipeline.mode,
        failed_frames: report.failed_frames,
        aggregates: report.aggregates,
        per_frame: &report.per_frame,
        losses,
        config: cfg,
    };
    let outputs = RunOutputs {
        report: out_dir.join("report.json"),
        trajectory: out_dir.join("trajectory.csv"),
        points: out_dir.join("points.csv"),
        config: out_dir.join("effective_config.toml"),
    };
    write(&outputs.report, &(serde_json::to_string_pretty(&file).expect("report serializes") + "\n"))?;
    write(&outputs.trajectory, &trajectory_table(report))?;
    write(&outputs.points, &points_table(cfg.pipeline.mode, &result.frames))?;
    write(&outputs.config, &cfg.to_toml())?;
    if report.aggregates.is_none() {
        return Err(CliError::AllFramesFailed(format!("{} of {} frames", report.failed_frames, frames.len())));
    }
    Ok(outputs)
}

#[derive(Debug, Serialize)]
struct AblationRow {
    mode: Mode,
    failed_frames: usize,
    aggregates: Option<ErrorAggregates>,
}

#[derive(Debug, Serialize)]
struct AblationFile<'a> {
    seed: u64,
    rows: Vec<AblationRow>,
    config: &'a CliConfig,
}

/// Aggregates of every mode, in `Mode::ALL` order.
pub fn ablate(cfg: &CliConfig, frames: &[ScanFrame]) -> Result<Vec<(Mode, usize, Option<ErrorAggregates>)>, CliError> {
    Mode::ALL
        .iter()
        .map(|&mode| {
            let mut c = cfg.clone();
            c.pipeline.mode = mode;
            let r = run(&c, frames)?;
            Ok((mode, r.report.failed_frames, r.report.aggregates))
        })
        .collect()
}

/// Writes `ablation.csv` and `ablation.json`; returns their paths.
pub fn cmd_ablate(cfg: &CliConfig, frames: &[ScanFrame], out_dir: &Path) -> Result<[PathBuf; 2], CliError> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let rows = ablate(cfg, frames)?;
    let csv = ablation_table(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(), cfg.seed);
    let mut echoed = cfg.clone();
    echoed.pipeline.mode = Mode::Full;
    let file = AblationFile {
        seed: cfg.seed,
        rows: rows
            .iter()
            .map(|&(mode, failed_frames, aggregates)| AblationRow {
                mode,
                failed_frames,
                aggregates,
            })
            .collect(),
        config: &echoed,
    };
    let paths = [out_dir.join("ablation.csv"), out_dir.join("ablation.json")];
    write(&paths[0], &csv)?;
    write(&paths[1], &(serde_json::to_string_pretty(&file).expect("ablation serializes") + "\n"))?;
    if let Some((mode, ..)) = rows.iter().find(|r| r.2.is_none()) {
        return Err(CliError::AllFramesFailed(format!("mode {mode}")));
    }
    Ok(paths)
}

fn summary_line(label: &str, rows: &[TrajectoryRow]) -> Result<String, CliError> {
    let errors: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.errors).collect();
    let failed = rows.len() - errors.len();
    Ok(match aggregate_errors(&errors) {
        Ok(a) => format!(
            "{label}: frames={} failed={failed} mean_t={} mean_r={} median_t={} median_r={}",
            rows.len(),
            a.mean_t,
            a.mean_r,
            a.median_t,
            a.median_r
        ),
        Err(_) => format!("{label}: frames={} failed={failed}", rows.len()),
    })
}

/// Score of `a` against `b` on one frame by translation error: 1 win,
/// 0.5 tie, 0 loss. A failed frame loses to a successful one.
fn frame_score(a: Option<(f64, f64)>, b: Option<(f64, f64)>) -> f64 {
    match (a, b) {
        (Some(x), Some(y)) if x.0 < y.0 => 1.0,
        (Some(x), Some(y)) if x.0 > y.0 => 0.0,
        (Some(_), None) => 1.0,
        (None, Some(_)) => 0.0,
        _ => 0.5,
    }
}

/// Summary of one trajectory table, or a comparison of two.
pub fn cmd_eval(table_a: &Path, table_b: Option<&Path>) -> Result<String, CliError> {
    let a = parse_trajectory_table(&read(table_a)?)?;
    let mut out = summary_line("a", &a)? + "\n";
    let Some(path_b) = table_b else {
        return Ok(out);
    };
    let b = parse_trajectory_table(&read(path_b)?)?;
    out += &(summary_line("b", &b)? + "\n");
    let frames_a: Vec<usize> = a.iter().map(|r| r.frame).collect();
    let frames_b: Vec<usize> = b.iter().map(|r| r.frame).collect();
    if frames_a != frames_b {
        return Err(CliError::Config("the two tables cover different frames".into()));
    }
    out += "frame,delta_t,delta_r\n";
    let mut score = 0.0;
    for (ra, rb) in a.iter().zip(&b) {
        score += frame_score(ra.errors, rb.errors);
        match (ra.errors, rb.errors) {
            (Some(x), Some(y)) => writeln!(out, "{},{},{}", ra.frame, x.0 - y.0, x.1 - y.1).unwrap(),
            _ => writeln!(out, "{},,", ra.frame).unwrap(),
        }
    }
    let rate = if a.is_empty() { 0.5 } else { score / a.len() as f64 };
    writeln!(out, "win_rate_a={rate}").unwrap();
    Ok(out)
}
