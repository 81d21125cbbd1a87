use std::fs;

use clap::Parser;
use ctodom::{execute, Cli, CliError, CommonArgs, SensorArgs};
use ctodom_core::config::Config;
use ctodom_core::error::RunError;
use ctodom_core::sim::read_bundle;

fn run(args: &[&str]) -> Result<(), CliError> {
    execute(Cli::parse_from(std::iter::once("ctodom").chain(args.iter().copied())))
}

#[test]
fn simulate_run_evaluate_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("b");
    let out = dir.path().join("r");
    let (b, o) = (bundle.to_str().unwrap(), out.to_str().unwrap());
    run(&["simulate", "--duration", "4", "--regime", "hybrid", "--out", b]).unwrap();
    run(&["run", b, "--mode", "uni-2", "--out", o]).unwrap();
    for f in ["trajectory.tum", "intervals.csv", "placement.csv", "map.xyz", "tracked.csv", "config.toml"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let echoed = Config::from_toml(&fs::read_to_string(out.join("config.toml")).unwrap()).unwrap();
    assert_eq!(echoed.run.mode, "uniform-2");
    let placements = fs::read_to_string(out.join("placement.csv")).unwrap();
    assert!(placements.lines().skip(1).all(|l| l.ends_with(",2")));

    let est = out.join("trajectory.tum");
    let m = ctodom::evaluate_files(&est, &bundle.join("gt.tum"), false).unwrap();
    assert!(m.ate_rmse_m < 0.1 && m.n_poses > 200);
    let aligned = ctodom::evaluate_files(&est, &bundle.join("gt.tum"), true).unwrap();
    assert!(aligned.ate_rmse_m <= m.ate_rmse_m + 1e-12);
    assert!(ctodom::evaluate_files(&est, &est, false).unwrap().ate_rmse_m < 1e-12);
}

#[test]
fn run_config_keeps_bundle_sim_and_calib() {
    let dir = tempfile::tempdir().unwrap();
    let bundle_dir = dir.path().join("b");
    let mut sim = Config::default();
    sim.sim.duration = 3.0;
    sim.calib.fx = 380.0;
    ctodom::simulate_to(&sim, &bundle_dir).unwrap();
    let bundle = read_bundle(&bundle_dir).unwrap();

    let cfg_path = dir.path().join("c.toml");
    fs::write(&cfg_path, "[run]\nmode = \"uniform-4\"\n[sim]\nduration = 99.0\n[calib]\nfx = 500.0\n").unwrap();
    let common = CommonArgs { config: Some(cfg_path), seed: Some(5) };
    let c = ctodom::run_config(&bundle, &common, SensorArgs { no_camera: true, no_lidar: false }, None).unwrap();
    assert_eq!(c.run.mode, "uniform-4");
    assert_eq!(c.run.seed, 5);
    assert!(!c.run.use_camera && c.run.use_lidar);
    assert_eq!(c.sim, bundle.config.sim);
    assert_eq!(c.calib.fx, 380.0);

    let c = ctodom::run_config(&bundle, &CommonArgs::default(), SensorArgs::default(), Some("non-uni")).unwrap();
    assert_eq!(c.run.mode, "non-uniform");
    assert!(ctodom::run_config(&bundle, &CommonArgs::default(), SensorArgs::default(), Some("uniform-0")).is_err());
}

#[test]
fn sweep_writes_both_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (b, s) = (dir.path().join("b"), dir.path().join("s"));
    run(&["simulate", "--duration", "3", "--out", b.to_str().unwrap()]).unwrap();
    run(&["sweep", b.to_str().unwrap(), "--modes", "uniform-1,non-uniform", "--out", s.to_str().unwrap()]).unwrap();
    let table = fs::read_to_string(s.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "mode,ate_rmse_m,mean_opt_ms,fail");
    assert!(lines[1].starts_with("uniform-1,") && lines[2].starts_with("non-uniform,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",0")));
    let metrics = fs::read_to_string(s.join("sweep_metrics.csv")).unwrap();
    assert!(!metrics.contains("opt_ms"));
    assert_eq!(metrics.lines().count(), 3);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    let e = run(&["run", missing.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[run]\ndt = -1.0\n").unwrap();
    let e = run(&["simulate", "--config", bad.to_str().unwrap(), "--out", dir.path().join("b").to_str().unwrap()]).unwrap_err();
    assert_eq!(e.exit_code(), 2);

    let tum = dir.path().join("t.tum");
    fs::write(&tum, "0.0 1 2 3\n").unwrap();
    assert_eq!(run(&["evaluate", tum.to_str().unwrap(), tum.to_str().unwrap()]).unwrap_err().exit_code(), 2);

    assert_eq!(CliError::Run(RunError::NoData("imu".into())).exit_code(), 3);
}

#[test]
fn sweep_marks_failed_modes() {
    let rows = [ctodom::SweepRow { mode: "uniform-1".into(), ate: None, mean_opt_ms: f64::NAN, mean_n_cp: f64::NAN, fail: true }];
    assert_eq!(ctodom::sweep_csv(&rows), "mode,ate_rmse_m,mean_opt_ms,fail\nuniform-1,NaN,NaN,1\n");
}
