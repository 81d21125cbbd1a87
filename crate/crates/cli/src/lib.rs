//! Subcommands of the `ctodom` binary: simulate a bundle, run the odometry on
//! it, evaluate a trajectory against ground truth and sweep placement modes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

use ctodom_core::config::{Config, Mode};
use ctodom_core::error::{ConfigError, EvalError, IoError, RunError, SplineError};
use ctodom_core::estimator::{run_odometry, RunResult, SensorStreams};
use ctodom_core::sim::{ate_rmse, read_bundle, simulate, write_bundle, AteStats, SimBundle, TimedPose};
use ctodom_core::spline::io::{parse_tum, sample_poses};

/// Rate of every exported and evaluated trajectory.
pub const TRAJECTORY_RATE_HZ: f64 = 100.0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("{path}: {source}")]
    Trajectory {
        path: String,
        #[source]
        source: SplineError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Run(#[from] RunError),
}

impl CliError {
    /// 2 for unusable input, 3 when the estimator aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Run(RunError::Config(_)) => 2,
            CliError::Run(_) => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "ctodom", version, about = "Continuous-time LiDAR-inertial-camera odometry")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic sensor bundle.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        regime: Option<String>,
        #[arg(long)]
        duration: Option<f64>,
        /// Output bundle directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the odometry over a bundle.
    Run {
        bundle: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sensors: SensorArgs,
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// ATE of an estimated TUM trajectory against a reference, printed as JSON.
    Evaluate {
        estimate: PathBuf,
        reference: PathBuf,
        /// Rigidly align the estimate before computing the error.
        #[arg(long)]
        align: bool,
    },
    /// Run several placement modes over one bundle and tabulate ATE and timing.
    Sweep {
        bundle: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        sensors: SensorArgs,
        /// Comma-separated modes, e.g. `uniform-1,uniform-4,non-uniform`.
        #[arg(long, value_delimiter = ',', default_value = "uniform-1,uniform-2,uniform-3,uniform-4,non-uniform")]
        modes: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML config; every key has a default.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct SensorArgs {
    #[arg(long)]
    pub no_camera: bool,
    #[arg(long)]
    pub no_lidar: bool,
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(|e| IoError::io(path, e))
}

pub fn load_config(path: Option<&Path>) -> Result<Config, CliError> {
    match path {
        Some(p) => Ok(Config::from_toml(&read_text(p)?)?),
        None => Ok(Config::default()),
    }
}

/// Estimator config for a bundle: the bundle's own config unless a file is
/// given, and in both cases the simulator and calibration sections that
/// define the data are taken from the bundle.
pub fn run_config(bundle: &SimBundle, common: &CommonArgs, sensors: SensorArgs, mode: Option<&str>) -> Result<Config, CliError> {
    let mut config = match &common.config {
        Some(p) => load_config(Some(p))?,
        None => bundle.config.clone(),
    };
    config.sim = bundle.config.sim.clone();
    config.calib = bundle.config.calib.clone();
    if let Some(seed) = common.seed {
        config.run.seed = seed;
    }
    if let Some(m) = mode {
        config.run.mode = Mode::parse(m)?.label();
    }
    if sensors.no_camera {
        config.run.use_camera = false;
    }
    if sensors.no_lidar {
        config.run.use_lidar = false;
    }
    config.validate()?;
    Ok(config)
}

pub fn simulate_to(config: &Config, out: &Path) -> Result<SimBundle, CliError> {
    let bundle = simulate(config)?;
    write_bundle(&bundle, out)?;
    Ok(bundle)
}

pub fn streams(bundle: &SimBundle) -> SensorStreams<'_> {
    SensorStreams {
        imu: &bundle.imu,
        scans: &bundle.scans,
        frames: &bundle.frames,
        outlier_labels: Some(&bundle.outliers),
    }
}

pub fn ground_truth_poses(bundle: &SimBundle) -> Vec<TimedPose> {
    sample_poses(&bundle.gt, 0.0, bundle.gt.duration, TRAJECTORY_RATE_HZ)
}

pub fn estimated_poses(result: &RunResult) -> Vec<TimedPose> {
    let (a, b) = result.trajectory.domain();
    sample_poses(&result.trajectory, a, b, TRAJECTORY_RATE_HZ)
}

/// Writes the trajectory, logs, map snapshot, tracked points and the
/// effective config of one run.
pub fn write_run(result: &RunResult, config: &Config, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    write_text(&out.join("trajectory.tum"), &result.to_tum(TRAJECTORY_RATE_HZ))?;
    write_text(&out.join("intervals.csv"), &result.intervals_csv())?;
    write_text(&out.join("placement.csv"), &result.placements_csv())?;
    write_text(&out.join("map.xyz"), &result.map_snapshot())?;
    write_text(&out.join("tracked.csv"), &result.tracked.to_csv())?;
    write_text(&out.join("config.toml"), &config.to_toml())?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub ate_rmse_m: f64,
    pub mean: f64,
    pub max: f64,
    pub n_poses: usize,
}

impl From<AteStats> for Metrics {
    fn from(s: AteStats) -> Self {
        Self {
            ate_rmse_m: s.rmse,
            mean: s.mean,
            max: s.max,
            n_poses: s.n_poses,
        }
    }
}

fn read_tum(path: &Path) -> Result<Vec<TimedPose>, CliError> {
    parse_tum(&read_text(path)?).map_err(|source| CliError::Trajectory {
        path: path.display().to_string(),
        source,
    })
}

pub fn evaluate_files(estimate: &Path, reference: &Path, align: bool) -> Result<Metrics, CliError> {
    Ok(ate_rmse(&read_tum(estimate)?, &read_tum(reference)?, align)?.into())
}

/// One sweep row. `ate` is `None` when the estimator aborted.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mode: String,
    pub ate: Option<AteStats>,
    pub mean_opt_ms: f64,
    pub mean_n_cp: f64,
    pub fail: bool,
}

pub fn sweep(config: &Config, bundle: &SimBundle, modes: &[Mode]) -> Result<Vec<SweepRow>, CliError> {
    let gt = ground_truth_poses(bundle);
    let mut rows = Vec::new();
    for mode in modes {
        let mut c = config.clone();
        c.run.mode = mode.label();
        let row = match run_odometry(&c, &streams(bundle)) {
            Ok(result) => {
                let ate = ate_rmse(&estimated_poses(&result), &gt, false)?;
                let n = result.placements.len().max(1) as f64;
                SweepRow {
                    mode: mode.label(),
                    ate: Some(ate),
                    mean_opt_ms: result.mean_opt_ms(),
                    mean_n_cp: result.placements.iter().map(|p| p.n_cp as f64).sum::<f64>() / n,
                    fail: !(ate.rmse <= c.run.fail_threshold_m),
                }
            }
            Err(RunError::Solve { .. }) => SweepRow {
                mode: mode.label(),
                ate: None,
                mean_opt_ms: f64::NAN,
                mean_n_cp: f64::NAN,
                fail: true,
            },
            Err(e) => return Err(e.into()),
        };
        rows.push(row);
    }
    Ok(rows)
}

fn rmse_of(row: &SweepRow) -> f64 {
    row.ate.map_or(f64::NAN, |a| a.rmse)
}

/// `mode,ate_rmse_m,mean_opt_ms,fail`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("mode,ate_rmse_m,mean_opt_ms,fail\n");
    for r in rows {
        let _ = writeln!(s, "{},{:.6},{:.3},{}", r.mode, rmse_of(r), r.mean_opt_ms, r.fail as u8);
    }
    s
}

/// The deterministic part of a sweep: no timing columns.
pub fn sweep_metrics_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("mode,ate_rmse_m,ate_mean_m,ate_max_m,n_poses,mean_n_cp,fail\n");
    for r in rows {
        let (mean, max, n) = r.ate.map_or((f64::NAN, f64::NAN, 0), |a| (a.mean, a.max, a.n_poses));
        let _ = writeln!(s, "{},{:.9},{:.9},{:.9},{},{:.4},{}", r.mode, rmse_of(r), mean, max, n, r.mean_n_cp, r.fail as u8);
    }
    s
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, regime, duration, out } => {
            let mut config = load_config(common.config.as_deref())?;
            if let Some(seed) = common.seed {
                config.run.seed = seed;
            }
            if let Some(r) = regime {
                config.sim.regime = r;
            }
            if let Some(d) = duration {
                config.sim.duration = d;
            }
            config.validate()?;
            let bundle = simulate_to(&config, &out)?;
            println!(
                "wrote {}: {:.1} s, {} imu samples, {} scans, {} frames",
                out.display(),
                config.sim.duration,
                bundle.imu.len(),
                bundle.scans.len(),
                bundle.frames.len()
            );
        }
        Command::Run { bundle, common, sensors, mode, out } => {
            let data = read_bundle(&bundle)?;
            let config = run_config(&data, &common, sensors, mode.as_deref())?;
            let result = run_odometry(&config, &streams(&data))?;
            write_run(&result, &config, &out)?;
            let ate = ate_rmse(&estimated_poses(&result), &ground_truth_poses(&data), false)?;
            println!(
                "{}: {} intervals, mean optimization {:.2} ms, ATE {:.4} m",
                config.run.mode,
                result.intervals.len(),
                result.mean_opt_ms(),
                ate.rmse
            );
        }
        Command::Evaluate { estimate, reference, align } => {
            let metrics = evaluate_files(&estimate, &reference, align)?;
            println!("{}", serde_json::to_string(&metrics).expect("metrics serialize"));
        }
        Command::Sweep { bundle, common, sensors, modes, out } => {
            let data = read_bundle(&bundle)?;
            let config = run_config(&data, &common, sensors, None)?;
            let modes = modes.iter().map(|m| Mode::parse(m)).collect::<Result<Vec<_>, _>>()?;
            let rows = sweep(&config, &data, &modes)?;
            create_dir(&out)?;
            let table = sweep_csv(&rows);
            write_text(&out.join("sweep.csv"), &table)?;
            write_text(&out.join("sweep_metrics.csv"), &sweep_metrics_csv(&rows))?;
            print!("{table}");
        }
    }
    Ok(())
}
