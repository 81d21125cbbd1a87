//! Interval-by-interval odometry: placement, IMU bootstrap, LiDAR and visual
//! association, window optimization, marginalization and map upkeep.

use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::{DVector, Matrix3, UnitQuaternion, Vector3};

use super::lm::{solve_lm, SolverSettings};
use super::prior::{LinPoint, PriorFactor, VarId};
use super::window::{WindowFactors, WindowProblem};
use crate::config::{Config, Mode};
use crate::error::{RunError, SolveError};
use crate::factors::{BiasFactor, ImuFactor, LidarPlanarFactor};
use crate::maps::{admit_new_points, evict_by_error, fit_plane, match_frame, AssociationStats, BodyPose, CameraModel, LocalMap, TrackedPointSet, VisualParams, VoxelMap};
use crate::placement::{append_and_initialize, decide_count, interval_knots, motion_stats, propagate_rotation, PlacementPolicy};
use crate::sensors::{Bias, CameraFrame, Extrinsics, ImuSample, Intrinsics, LidarScan, GRAVITY};
use crate::spline::io::to_tum;
use crate::spline::{KnotVector, Trajectory, DEGREE};

/// Control points shared between consecutive intervals.
pub const SHARED_CPS: usize = DEGREE;

/// Timestamp slack for comparisons against stream ends.
const TIME_EPS: f64 = 1e-9;

/// Borrowed measurement streams, each sorted by time.
#[derive(Debug, Clone, Copy)]
pub struct SensorStreams<'a> {
    pub imu: &'a [ImuSample],
    pub scans: &'a [LidarScan],
    pub frames: &'a [CameraFrame],
    /// Per frame, landmark ids known to be outliers (simulation only).
    pub outlier_labels: Option<&'a [Vec<u64>]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntervalLog {
    pub t_start: f64,
    pub n_cp: usize,
    pub n_lidar_factors: usize,
    pub n_visual_factors: usize,
    pub n_imu_factors: usize,
    pub iters: usize,
    pub final_cost: f64,
    pub solve_ms: f64,
    pub bootstrap_iters: usize,
    /// Bootstrap diverged and the initialization was kept.
    pub bootstrap_failed: bool,
    pub condition: f64,
    pub prior_regularized: bool,
    pub visual: AssociationStats,
}

impl IntervalLog {
    pub const CSV_HEADER: &'static str = "t_start,n_cp,n_lidar_factors,n_visual_factors,n_imu_factors,iters,final_cost,solve_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{},{},{},{},{},{},{:.3}",
            self.t_start, self.n_cp, self.n_lidar_factors, self.n_visual_factors, self.n_imu_factors, self.iters, self.final_cost, self.solve_ms
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementRecord {
    pub t_start: f64,
    pub gyro_norm: f64,
    pub accel_norm: f64,
    pub n_cp: usize,
}

impl PlacementRecord {
    pub const CSV_HEADER: &'static str = "t_start,N_g,N_a,n_cp";

    pub fn csv_row(&self) -> String {
        format!("{:.6},{},{},{}", self.t_start, self.gyro_norm, self.accel_norm, self.n_cp)
    }
}

/// Fate of labeled outlier observations that reached the tracked set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OutlierTally {
    /// Outliers observed on a tracked point.
    pub matched: usize,
    /// Of those, rejected before producing a factor.
    pub rejected: usize,
    /// Outliers admitted as new tracked points.
    pub admitted: usize,
}

impl OutlierTally {
    /// Rejected share of every outlier that could have entered the estimator.
    pub fn rejection_rate(&self) -> f64 {
        let total = self.matched + self.admitted;
        if total == 0 {
            1.0
        } else {
            self.rejected as f64 / total as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub intervals: Vec<IntervalLog>,
    pub placements: Vec<PlacementRecord>,
    pub outliers: OutlierTally,
    pub gravity: Vector3<f64>,
    pub bias: Bias,
    pub voxels: VoxelMap,
    pub tracked: TrackedPointSet,
}

impl RunResult {
    pub fn to_tum(&self, rate_hz: f64) -> String {
        let (a, b) = self.trajectory.domain();
        to_tum(&self.trajectory, a, b, rate_hz)
    }

    pub fn mean_opt_ms(&self) -> f64 {
        if self.intervals.is_empty() {
            return 0.0;
        }
        self.intervals.iter().map(|l| l.solve_ms).sum::<f64>() / self.intervals.len() as f64
    }

    pub fn intervals_csv(&self) -> String {
        let mut s = format!("{}\n", IntervalLog::CSV_HEADER);
        for l in &self.intervals {
            s.push_str(&l.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn placements_csv(&self) -> String {
        let mut s = format!("{}\n", PlacementRecord::CSV_HEADER);
        for p in &self.placements {
            s.push_str(&p.csv_row());
            s.push('\n');
        }
        s
    }

    /// Voxel map as `x y z` lines.
    pub fn map_snapshot(&self) -> String {
        let mut s = String::new();
        for (_, pts) in self.voxels.iter() {
            for p in pts {
                s.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
            }
        }
        s
    }
}

/// Index range of the items whose time lies in `[t0, t1)`. Exact comparison
/// keeps the split consistent with segment lookup on the same knot values.
fn time_range<T>(items: &[T], t0: f64, t1: f64, time: impl Fn(&T) -> f64) -> std::ops::Range<usize> {
    let a = items.partition_point(|x| time(x) < t0);
    let b = items.partition_point(|x| time(x) < t1);
    a..b.max(a)
}

/// Time of grid step `n` for interval length `dt`, computed as `n / rate`
/// so it matches sensor timestamps generated on the same grid.
fn grid_time(n: usize, dt: f64) -> f64 {
    let rate = 1.0 / dt;
    let rounded = rate.round();
    if (rate - rounded).abs() < 1e-9 {
        n as f64 / rounded
    } else {
        n as f64 * dt
    }
}

fn body_pose(traj: &Trajectory, t: f64) -> BodyPose {
    let (r, p) = traj.eval_pose_clamped(t);
    BodyPose {
        rotation: r.into_inner(),
        position: p,
    }
}

fn window_cps(traj: &Trajectory, first: usize, n: usize) -> (Vec<UnitQuaternion<f64>>, Vec<Vector3<f64>>) {
    (traj.rotations()[first..first + n].to_vec(), traj.positions()[first..first + n].to_vec())
}

fn restore_cps(traj: &mut Trajectory, first: usize, saved: &(Vec<UnitQuaternion<f64>>, Vec<Vector3<f64>>)) {
    for (k, (q, p)) in saved.0.iter().zip(&saved.1).enumerate() {
        traj.set_control_point(first + k, *q, *p);
    }
}

pub struct Odometry {
    config: Config,
    mode: Mode,
    policy: PlacementPolicy,
    settings: SolverSettings,
    bootstrap_settings: SolverSettings,
    ext: Extrinsics,
    camera: CameraModel,
    visual_params: VisualParams,
    /// Grid index of the first interval start, `t = step0 * dt`.
    step0: usize,
    traj: Trajectory,
    prior: Option<PriorFactor>,
    bias: Bias,
    gravity: Vector3<f64>,
    local_map: LocalMap,
    voxels: VoxelMap,
    tracked: TrackedPointSet,
    last_n_cp: usize,
    /// Placement decisions already made for upcoming intervals.
    pending: VecDeque<PlacementRecord>,
    /// Index of the last camera frame that went through association.
    last_frame: Option<usize>,
    intervals: Vec<IntervalLog>,
    placements: Vec<PlacementRecord>,
    outliers: OutlierTally,
}

impl Odometry {
    /// Initializes gravity, biases, the first control points and the maps
    /// from the stationary start of the streams.
    pub fn initialize(config: &Config, data: &SensorStreams<'_>) -> Result<Self, RunError> {
        config.validate()?;
        let dt = config.run.dt;
        let step0 = (config.run.init_duration / dt).round().max(1.0) as usize;
        let t_init = grid_time(step0, dt);
        let still = &data.imu[time_range(data.imu, f64::NEG_INFINITY, t_init, |m| m.t)];
        if still.len() < 10 {
            return Err(RunError::NoData(format!("{} IMU samples before t = {t_init}", still.len())));
        }
        let n = still.len() as f64;
        let f_mean = still.iter().map(|m| m.accel).sum::<Vector3<f64>>() / n;
        let w_mean = still.iter().map(|m| m.gyro).sum::<Vector3<f64>>() / n;
        let up = f_mean.normalize();
        let gravity = -GRAVITY * up;
        let bias = Bias {
            gyro: w_mean,
            accel: f_mean - GRAVITY * up,
        };

        let mut knots: Vec<f64> = (1..=DEGREE + 1).rev().map(|j| t_init - j as f64 * dt).collect();
        knots.push(t_init);
        let traj = Trajectory::new(
            KnotVector::new(knots).map_err(|e| RunError::NoData(e.to_string()))?,
            vec![UnitQuaternion::identity(); DEGREE + 1],
            vec![Vector3::zeros(); DEGREE + 1],
        )
        .map_err(|e| RunError::NoData(e.to_string()))?;
        let n_cp = traj.num_control_points();
        let mut blocks = Vec::new();
        let mut sigmas = Vec::new();
        for g in n_cp - SHARED_CPS..n_cp {
            blocks.push((VarId::RotationCp(g), LinPoint::Rotation(traj.rotations()[g])));
            blocks.push((VarId::PositionCp(g), LinPoint::Euclidean(DVector::zeros(3))));
            sigmas.extend([1e-4; 6]);
        }
        blocks.push((VarId::GyroBias, LinPoint::Euclidean(DVector::from_column_slice(bias.gyro.as_slice()))));
        blocks.push((VarId::AccelBias, LinPoint::Euclidean(DVector::from_column_slice(bias.accel.as_slice()))));
        sigmas.extend([5e-4; 3]);
        sigmas.extend([2e-2; 3]);
        let prior = PriorFactor::diagonal(blocks, &sigmas);

        let ext = Extrinsics::from_config(&config.calib);
        let camera = CameraModel {
            imu_camera: ext.imu_camera,
            intrinsics: Intrinsics::from_config(&config.calib),
        };
        let maps = &config.maps;
        let mut odo = Self {
            config: config.clone(),
            mode: config.mode()?,
            policy: PlacementPolicy::from_config(&config.placement)?,
            settings: SolverSettings::from_config(&config.solver),
            bootstrap_settings: SolverSettings {
                max_iterations: config.solver.bootstrap_iterations,
                ..SolverSettings::from_config(&config.solver)
            },
            ext,
            camera,
            visual_params: VisualParams::from_config(config),
            step0,
            traj,
            prior: Some(prior),
            bias,
            gravity,
            local_map: LocalMap::new(maps.keyscan_dt, maps.keyscan_dist, maps.keyscan_capacity),
            voxels: VoxelMap::new(maps.voxel_resolution, maps.voxel_cap),
            tracked: TrackedPointSet::new(),
            last_n_cp: 1,
            pending: VecDeque::new(),
            last_frame: None,
            intervals: Vec::new(),
            placements: Vec::new(),
            outliers: OutlierTally::default(),
        };

        // the rig rests at the origin: scans and the last frame map directly
        let rest = body_pose(&odo.traj, t_init);
        if config.run.use_lidar {
            let period = 1.0 / config.sim.lidar_rate.max(1e-9);
            for scan in data.scans.iter().filter(|s| s.t_start + period <= t_init + TIME_EPS) {
                let pts: Vec<_> = scan.points.iter().map(|p| odo.ext.imu_lidar * nalgebra::Point3::from(p.point)).map(|p| p.coords).collect();
                odo.voxels.insert(&pts);
                odo.local_map.insert_scan(pts, rest.position, scan.t_start);
            }
        }
        if config.run.use_camera {
            let r = time_range(data.frames, f64::NEG_INFINITY, t_init, |f| f.t);
            if let Some(frame) = data.frames[r.clone()].last() {
                let previous = r.end.checked_sub(2).filter(|&j| j >= r.start).map(|j| (&data.frames[j], &rest));
                let admitted = admit_new_points(&mut odo.tracked, &odo.voxels, frame, &rest, previous, &odo.camera, &odo.visual_params);
                odo.tally_admitted(data, r.end - 1, &admitted);
                odo.last_frame = Some(r.end - 1);
            }
        }
        Ok(odo)
    }

    pub fn interval_bounds(&self, k: usize) -> (f64, f64) {
        let dt = self.config.run.dt;
        (grid_time(self.step0 + k, dt), grid_time(self.step0 + k + 1, dt))
    }

    /// Number of whole intervals covered by the IMU stream.
    pub fn num_intervals(&self, data: &SensorStreams<'_>) -> usize {
        let Some(last) = data.imu.last() else { return 0 };
        let mut k = 0;
        while self.interval_bounds(k).1 <= last.t + TIME_EPS {
            k += 1;
        }
        k
    }

    /// Extends the pending decisions until they cover two knots past the
    /// current end and returns those knots. Stops early at the end of the
    /// IMU stream.
    fn plan_ahead(&mut self, k: usize, data: &SensorStreams<'_>) -> Vec<f64> {
        let (_, t1) = self.interval_bounds(k);
        let mut r = self.traj.eval_pose_clamped(t1).0.into_inner();
        let mut future = Vec::new();
        for ahead in 1.. {
            if future.len() >= 2 {
                break;
            }
            let (u0, u1) = self.interval_bounds(k + ahead);
            let imu = &data.imu[time_range(data.imu, u0, u1, |m| m.t)];
            if self.pending.len() < ahead {
                if imu.is_empty() {
                    break;
                }
                let record = self.place(u0, imu, &r);
                self.pending.push_back(record);
            }
            future.extend(interval_knots(u0, u1, self.pending[ahead - 1].n_cp));
            r = propagate_rotation(imu, &r, &self.bias);
        }
        future
    }

    fn place(&self, t_start: f64, imu: &[ImuSample], r_start: &Matrix3<f64>) -> PlacementRecord {
        let stats = motion_stats(imu, r_start, &self.gravity, &self.bias);
        let adaptive = stats.map(|s| decide_count(&s, &self.policy)).unwrap_or(self.last_n_cp);
        PlacementRecord {
            t_start,
            gyro_norm: stats.map_or(f64::NAN, |s| s.gyro_norm),
            accel_norm: stats.map_or(f64::NAN, |s| s.accel_norm),
            n_cp: match self.mode {
                Mode::Uniform(n) => n,
                Mode::NonUniform => adaptive,
            },
        }
    }

    fn tally_admitted(&mut self, data: &SensorStreams<'_>, frame_idx: usize, admitted: &[u64]) {
        if let Some(labels) = data.outlier_labels.and_then(|l| l.get(frame_idx)) {
            self.outliers.admitted += admitted.iter().filter(|id| labels.contains(id)).count();
        }
    }

    fn associate_lidar(&self, scan: &LidarScan) -> Vec<LidarPlanarFactor> {
        let maps = &self.config.maps;
        if self.local_map.num_points() < maps.knn {
            return Vec::new();
        }
        let stride = (scan.points.len() / maps.lidar_points_per_interval.max(1)).max(1);
        let max_d2 = maps.max_neighbor_dist * maps.max_neighbor_dist;
        let mut out = Vec::new();
        for p in scan.points.iter().step_by(stride) {
            let Ok((r, pos)) = self.traj.eval_pose(p.t) else { continue };
            let world = r * (self.ext.imu_lidar * nalgebra::Point3::from(p.point)).coords + pos;
            let nbrs = self.local_map.knn(&world, maps.knn);
            if nbrs.len() < maps.knn || nbrs.last().is_some_and(|(_, d2)| *d2 > max_d2) {
                continue;
            }
            let pts: Vec<_> = nbrs.iter().map(|(q, _)| *q).collect();
            if let Some(plane) = fit_plane(&pts, maps.plane_tolerance) {
                out.push(LidarPlanarFactor {
                    point_lidar: p.point,
                    t: p.t,
                    normal: plane.normal,
                    d: plane.d,
                    sigma: self.config.noise.sigma_lidar,
                });
            }
        }
        out
    }

    pub fn process_interval(&mut self, k: usize, data: &SensorStreams<'_>) -> Result<&IntervalLog, RunError> {
        let (t0, t1) = self.interval_bounds(k);
        let fail = |source: SolveError| RunError::Solve { t: t0, source };
        let imu = &data.imu[time_range(data.imu, t0, t1, |m| m.t)];

        // placement, decided one interval early when the knot look-ahead is on
        let record = match self.pending.pop_front() {
            Some(r) if r.t_start == t0 => r,
            _ => {
                self.pending.clear();
                let r_start: Matrix3<f64> = self.traj.eval_pose_clamped(t0).0.into_inner();
                self.place(t0, imu, &r_start)
            }
        };
        let n_cp = record.n_cp;
        self.last_n_cp = n_cp;
        self.placements.push(record);
        append_and_initialize(&mut self.traj, n_cp, t1).map_err(|e| fail(e.into()))?;
        let n_cps = n_cp + SHARED_CPS;
        let first_cp = self.traj.num_control_points() - n_cps;

        let noise = self.config.noise.clone();
        let imu_factors: Vec<ImuFactor> = imu
            .iter()
            .map(|m| ImuFactor {
                t: m.t,
                gyro_meas: m.gyro,
                accel_meas: m.accel,
                sigma_g: noise.sigma_gyro,
                sigma_a: noise.sigma_accel,
            })
            .collect();
        let mut solve_time = 0.0;

        // bootstrap on IMU and prior only
        let started = Instant::now();
        let saved = window_cps(&self.traj, first_cp, n_cps);
        let boot = WindowFactors {
            imu: imu_factors.clone(),
            ..Default::default()
        };
        let boot_result = {
            let mut problem = WindowProblem::new(&mut self.traj, first_cp, n_cps, self.bias, self.bias, false, &boot, self.prior.as_ref(), self.ext, self.gravity);
            solve_lm(&mut problem, &self.bootstrap_settings)
        };
        let (bootstrap_iters, bootstrap_failed) = match boot_result {
            Ok(r) => (r.iterations, false),
            Err(_) => {
                restore_cps(&mut self.traj, first_cp, &saved);
                (0, true)
            }
        };
        solve_time += started.elapsed().as_secs_f64();

        // the last two segments read two knots past t1; decide the intervals
        // that hold them so the basis stays fixed once appended
        if self.config.run.knot_lookahead {
            let future = self.plan_ahead(k, data);
            self.traj.set_lookahead_knots(&future).map_err(|e| fail(e.into()))?;
        }

        // visual matching under the bootstrapped pose
        let frame_range = time_range(data.frames, t0, t1, |f| f.t);
        let frame_idx = frame_range.clone().last();
        let mut visual_stats = AssociationStats::default();
        let mut visual = Vec::new();
        if let (true, Some(fi)) = (self.config.run.use_camera, frame_idx) {
            let frame = &data.frames[fi];
            let predicted = body_pose(&self.traj, frame.t);
            let (factors, stats) = match_frame(&mut self.tracked, frame, &predicted, &self.camera, &self.visual_params, self.config.run.seed);
            if let Some(labels) = data.outlier_labels.and_then(|l| l.get(fi)) {
                for id in labels {
                    let rejected = stats.rejected_ids.contains(id);
                    if rejected || stats.factor_ids.contains(id) {
                        self.outliers.matched += 1;
                        self.outliers.rejected += usize::from(rejected);
                    }
                }
            }
            visual = factors;
            visual_stats = stats;
        }

        // full window optimization with repeated scan-to-map association
        let scan = data.scans[time_range(data.scans, t0, t1, |s| s.t_start)].last();
        let mut factors = WindowFactors {
            imu: imu_factors,
            lidar: Vec::new(),
            visual,
            bias: Some(BiasFactor {
                sigma_bg_walk: noise.sigma_bg_walk,
                sigma_ba_walk: noise.sigma_ba_walk,
            }),
        };
        let (mut bias_prev, mut bias_curr) = (self.bias, self.bias);
        let mut iters = 0;
        let mut final_cost = f64::NAN;
        for _ in 0..self.config.solver.association_rounds.max(1) {
            if let (true, Some(scan)) = (self.config.run.use_lidar, scan) {
                factors.lidar = self.associate_lidar(scan);
            }
            let started = Instant::now();
            let mut problem = WindowProblem::new(&mut self.traj, first_cp, n_cps, bias_prev, bias_curr, true, &factors, self.prior.as_ref(), self.ext, self.gravity);
            let report = solve_lm(&mut problem, &self.settings).map_err(fail)?;
            bias_prev = problem.bias_prev;
            bias_curr = problem.bias_curr;
            iters += report.iterations;
            final_cost = report.final_cost;
            solve_time += started.elapsed().as_secs_f64();
        }

        // marginalize onto the shared control points and current biases
        let started = Instant::now();
        let (prior, condition) = {
            let mut problem = WindowProblem::new(&mut self.traj, first_cp, n_cps, bias_prev, bias_curr, true, &factors, self.prior.as_ref(), self.ext, self.gravity);
            problem.marginalize(SHARED_CPS).map_err(fail)?
        };
        solve_time += started.elapsed().as_secs_f64();
        let prior_regularized = prior.regularized;
        self.prior = Some(prior);
        self.bias = bias_curr;

        // maps from the optimized trajectory
        if let (true, Some(scan)) = (self.config.run.use_lidar, scan) {
            let mut pts = Vec::with_capacity(scan.points.len());
            for p in &scan.points {
                let (r, pos) = self.traj.eval_pose_clamped(p.t);
                pts.push(r * (self.ext.imu_lidar * nalgebra::Point3::from(p.point)).coords + pos);
            }
            self.voxels.insert(&pts);
            let position = self.traj.eval_pose_clamped(t1).1;
            self.local_map.insert_scan(pts, position, scan.t_start);
        }
        if let (true, Some(fi)) = (self.config.run.use_camera, frame_idx) {
            let frame = &data.frames[fi];
            let pose = body_pose(&self.traj, frame.t);
            visual_stats.evicted = evict_by_error(&mut self.tracked, &pose, &self.camera, &self.visual_params).len();
            let prev_pose = self.last_frame.map(|j| body_pose(&self.traj, data.frames[j].t));
            let previous = self.last_frame.zip(prev_pose.as_ref()).map(|(j, p)| (&data.frames[j], p));
            let admitted = admit_new_points(&mut self.tracked, &self.voxels, frame, &pose, previous, &self.camera, &self.visual_params);
            visual_stats.admitted = admitted.len();
            self.tally_admitted(data, fi, &admitted);
            self.last_frame = Some(fi);
        }

        self.intervals.push(IntervalLog {
            t_start: t0,
            n_cp,
            n_lidar_factors: factors.lidar.len(),
            n_visual_factors: factors.visual.len(),
            n_imu_factors: factors.imu.len(),
            iters,
            final_cost,
            solve_ms: solve_time * 1e3,
            bootstrap_iters,
            bootstrap_failed,
            condition,
            prior_regularized,
            visual: visual_stats,
        });
        Ok(self.intervals.last().expect("just pushed"))
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.traj
    }

    pub fn bias(&self) -> Bias {
        self.bias
    }

    pub fn finish(self) -> RunResult {
        RunResult {
            trajectory: self.traj,
            intervals: self.intervals,
            placements: self.placements,
            outliers: self.outliers,
            gravity: self.gravity,
            bias: self.bias,
            voxels: self.voxels,
            tracked: self.tracked,
        }
    }
}

/// Runs the odometry over every whole interval of the streams.
pub fn run_odometry(config: &Config, data: &SensorStreams<'_>) -> Result<RunResult, RunError> {
    let mut odo = Odometry::initialize(config, data)?;
    for k in 0..odo.num_intervals(data) {
        odo.process_interval(k, data)?;
    }
    Ok(odo.finish())
}
