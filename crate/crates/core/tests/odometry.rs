use ctodom_core::config::Config;
use ctodom_core::error::RunError;
use ctodom_core::estimator::{run_odometry, RunResult, SensorStreams};
use ctodom_core::sim::{ate_rmse, simulate, SimBundle};
use ctodom_core::spline::io::sample_poses;

fn bundle(regime: &str, duration: f64, edit: impl FnOnce(&mut Config)) -> SimBundle {
    let mut c = Config::default();
    c.sim.regime = regime.into();
    c.sim.duration = duration;
    edit(&mut c);
    simulate(&c).unwrap()
}

fn streams(b: &SimBundle) -> SensorStreams<'_> {
    SensorStreams {
        imu: &b.imu,
        scans: &b.scans,
        frames: &b.frames,
        outlier_labels: Some(&b.outliers),
    }
}

fn ate(b: &SimBundle, r: &RunResult) -> f64 {
    let (t0, t1) = r.trajectory.domain();
    let est = sample_poses(&r.trajectory, t0, t1, 100.0);
    let gt = sample_poses(&b.gt, 0.0, b.gt.duration, 100.0);
    ate_rmse(&est, &gt, false).unwrap().rmse
}

#[test]
fn static_noiseless_run_does_not_drift() {
    let b = bundle("static", 4.0, |c| c.sim.zero_noise = true);
    let r = run_odometry(&b.config, &streams(&b)).unwrap();
    assert!(ate(&b, &r) < 1e-5);
    assert!(r.placements.iter().all(|p| p.n_cp == 1));
}

#[test]
fn smooth_run_is_accurate_and_mostly_single_control_point() {
    let b = bundle("smooth", 30.0, |_| {});
    let r = run_odometry(&b.config, &streams(&b)).unwrap();
    let e = ate(&b, &r);
    assert!(e < 0.05, "ATE {e}");
    let single = r.placements.iter().filter(|p| p.n_cp == 1).count();
    assert!(single as f64 >= 0.9 * r.placements.len() as f64);
    assert_eq!(r.intervals.len(), r.placements.len());
    assert!(r.intervals.iter().all(|l| l.n_lidar_factors > 0 && l.n_imu_factors > 0));
}

#[test]
fn frames_without_correspondences_match_lio_only() {
    let mut b = bundle("smooth", 5.0, |_| {});
    for f in &mut b.frames {
        f.observations.clear();
    }
    let with_camera = run_odometry(&b.config, &streams(&b)).unwrap();
    let mut lio = b.config.clone();
    lio.run.use_camera = false;
    let without = run_odometry(&lio, &streams(&b)).unwrap();
    assert_eq!(with_camera.to_tum(100.0), without.to_tum(100.0));
    assert!(with_camera.intervals.iter().all(|l| l.n_visual_factors == 0));
}

#[test]
fn uniform_mode_places_fixed_count() {
    let b = bundle("hybrid", 5.0, |c| c.run.mode = "uniform-3".into());
    let r = run_odometry(&b.config, &streams(&b)).unwrap();
    assert!(r.placements.iter().all(|p| p.n_cp == 3));
    let knots = r.trajectory.knots().as_slice();
    let tail = &knots[knots.len() - 7..];
    // the last two intervals each hold three evenly spaced knots
    for w in tail.windows(2) {
        assert!(((w[1] - w[0]) - b.config.run.dt / 3.0).abs() < 1e-9);
    }
}

#[test]
fn runs_are_deterministic() {
    let b = bundle("hybrid", 5.0, |c| c.sim.outlier_rate = 0.1);
    let a = run_odometry(&b.config, &streams(&b)).unwrap();
    let c = run_odometry(&b.config, &streams(&b)).unwrap();
    assert_eq!(a.to_tum(100.0), c.to_tum(100.0));
    assert_eq!(a.placements_csv(), c.placements_csv());
    assert_eq!(a.outliers, c.outliers);
}

#[test]
fn empty_imu_is_rejected() {
    let b = bundle("smooth", 3.0, |_| {});
    let data = SensorStreams {
        imu: &[],
        ..streams(&b)
    };
    assert!(matches!(run_odometry(&b.config, &data), Err(RunError::NoData(_))));
}
