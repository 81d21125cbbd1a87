//! Run configuration. Every key has a default so an empty file is valid.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub noise: NoiseSection,
    pub placement: PlacementSection,
    pub solver: SolverSection,
    pub maps: MapsSection,
    pub sim: SimSection,
    pub calib: CalibSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Uniform(usize),
    NonUniform,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self, ConfigError> {
        let s = s.trim();
        if s == "non-uniform" || s == "non-uni" {
            return Ok(Mode::NonUniform);
        }
        let n = s
            .strip_prefix("uniform-")
            .or_else(|| s.strip_prefix("uni-"))
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| ConfigError::Invalid(format!("unknown mode {s:?}")))?;
        if !(1..=16).contains(&n) {
            return Err(ConfigError::Invalid(format!("uniform mode needs 1..=16 control points, got {n}")));
        }
        Ok(Mode::Uniform(n))
    }

    pub fn label(&self) -> String {
        match self {
            Mode::Uniform(n) => format!("uniform-{n}"),
            Mode::NonUniform => "non-uniform".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub mode: String,
    pub dt: f64,
    pub use_lidar: bool,
    pub use_camera: bool,
    pub seed: u64,
    /// Length of the stationary start used to initialize gravity and biases.
    pub init_duration: f64,
    /// Sweep ATE threshold above which a mode is marked as failed.
    pub fail_threshold_m: f64,
    /// Space the two knots past the interval end by the placement decisions of
    /// the following intervals, which needs up to two intervals of IMU
    /// look-ahead. Otherwise the last spacing is repeated.
    pub knot_lookahead: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: "non-uniform".into(),
            dt: 0.1,
            use_lidar: true,
            use_camera: true,
            seed: 1,
            init_duration: 1.0,
            fail_threshold_m: 1.0,
            knot_lookahead: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma_lidar: f64,
    pub sigma_pixel: f64,
    pub cauchy_scale: f64,
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    pub sigma_bg_walk: f64,
    pub sigma_ba_walk: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            sigma_lidar: 0.05,
            sigma_pixel: 1.5,
            cauchy_scale: 2.0,
            sigma_gyro: 1.7e-3,
            sigma_accel: 2e-2,
            sigma_bg_walk: 1e-4,
            sigma_ba_walk: 1e-3,
        }
    }
}

/// Gear tables. Entry `k` of each threshold list is the inclusive lower
/// bound of gear `k`, so the first entry is 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementSection {
    pub gyro_thresholds: Vec<f64>,
    pub accel_thresholds: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Default for PlacementSection {
    fn default() -> Self {
        Self {
            gyro_thresholds: vec![0.0, 0.5, 1.5, 3.0],
            accel_thresholds: vec![0.0, 1.0, 3.0, 6.0],
            counts: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub cost_tolerance: f64,
    pub step_tolerance: f64,
    pub bootstrap_iterations: usize,
    /// Scan-to-map association + optimization rounds per interval.
    pub association_rounds: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            max_iterations: 30,
            initial_lambda: 1e-4,
            lambda_up: 10.0,
            lambda_down: 0.5,
            cost_tolerance: 1e-8,
            step_tolerance: 1e-10,
            bootstrap_iterations: 10,
            association_rounds: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapsSection {
    pub voxel_resolution: f64,
    pub voxel_cap: usize,
    pub keyscan_dt: f64,
    pub keyscan_dist: f64,
    pub keyscan_capacity: usize,
    pub plane_tolerance: f64,
    pub knn: usize,
    /// Associations whose farthest neighbor is beyond this are rejected.
    pub max_neighbor_dist: f64,
    pub lidar_points_per_interval: usize,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub gate_px: f64,
    pub depth_min: f64,
    pub max_depth: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold_px: f64,
}

impl Default for MapsSection {
    fn default() -> Self {
        Self {
            voxel_resolution: 0.1,
            voxel_cap: 10,
            keyscan_dt: 0.3,
            keyscan_dist: 0.2,
            keyscan_capacity: 20,
            plane_tolerance: 0.05,
            knn: 5,
            max_neighbor_dist: 1.0,
            lidar_points_per_interval: 300,
            grid_cols: 8,
            grid_rows: 8,
            gate_px: 5.0,
            depth_min: 0.05,
            max_depth: 20.0,
            ransac_iterations: 200,
            ransac_threshold_px: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub regime: String,
    pub duration: f64,
    pub imu_rate: f64,
    pub lidar_rate: f64,
    pub camera_rate: f64,
    /// Disables every noise source, bias and outlier.
    pub zero_noise: bool,
    pub range_noise: f64,
    pub pixel_noise: f64,
    pub outlier_rate: f64,
    pub outlier_px: f64,
    pub initial_bg: [f64; 3],
    pub initial_ba: [f64; 3],
    pub lidar_rings: usize,
    pub lidar_fov_deg: f64,
    pub lidar_azimuth_step_deg: f64,
    pub lidar_max_range: f64,
    pub landmark_spacing: f64,
    /// `[start, end]` seconds during which the LiDAR only sees the +x wall.
    pub degenerate_span: Option<[f64; 2]>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            regime: "smooth".into(),
            duration: 30.0,
            imu_rate: 400.0,
            lidar_rate: 10.0,
            camera_rate: 15.0,
            zero_noise: false,
            range_noise: 0.01,
            pixel_noise: 1.0,
            outlier_rate: 0.0,
            outlier_px: 50.0,
            initial_bg: [3e-3, -2e-3, 1e-3],
            initial_ba: [3e-2, -2e-2, 4e-2],
            lidar_rings: 16,
            lidar_fov_deg: 30.0,
            lidar_azimuth_step_deg: 2.0,
            lidar_max_range: 30.0,
            landmark_spacing: 0.4,
            degenerate_span: None,
        }
    }
}

/// Extrinsics as `[qx, qy, qz, qw]` + translation (sensor frame to IMU frame)
/// and pinhole intrinsics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSection {
    pub imu_lidar_rotation: [f64; 4],
    pub imu_lidar_translation: [f64; 3],
    pub imu_camera_rotation: [f64; 4],
    pub imu_camera_translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Default for CalibSection {
    fn default() -> Self {
        // camera z (optical axis) along body +x, camera x along body -y, camera y along body -z
        Self {
            imu_lidar_rotation: [0.0, 0.0, 0.0, 1.0],
            imu_lidar_translation: [0.05, 0.0, 0.1],
            imu_camera_rotation: [0.5, -0.5, 0.5, -0.5],
            imu_camera_translation: [0.1, 0.0, 0.05],
            fx: 400.0,
            fy: 400.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn mode(&self) -> Result<Mode, ConfigError> {
        Mode::parse(&self.run.mode)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.mode()?;
        if !(self.run.dt > 0.0) {
            return bad(format!("run.dt must be positive, got {}", self.run.dt));
        }
        if !(self.run.init_duration >= self.run.dt) {
            return bad("run.init_duration must be at least run.dt".into());
        }
        let p = &self.placement;
        if p.gyro_thresholds.len() != p.counts.len() || p.accel_thresholds.len() != p.counts.len() {
            return bad("placement lists must have equal length".into());
        }
        if p.counts.is_empty() || p.counts[0] == 0 || p.counts.windows(2).any(|w| w[1] < w[0]) || p.counts.iter().any(|&c| c > 8) {
            return bad("placement.counts must be positive, non-decreasing and at most 8".into());
        }
        for list in [&p.gyro_thresholds, &p.accel_thresholds] {
            if list[0] != 0.0 || list.windows(2).any(|w| !(w[1] > w[0])) {
                return bad("placement thresholds must start at 0 and increase".into());
            }
        }
        let n = &self.noise;
        for (name, v) in [
            ("sigma_lidar", n.sigma_lidar),
            ("sigma_pixel", n.sigma_pixel),
            ("cauchy_scale", n.cauchy_scale),
            ("sigma_gyro", n.sigma_gyro),
            ("sigma_accel", n.sigma_accel),
            ("sigma_bg_walk", n.sigma_bg_walk),
            ("sigma_ba_walk", n.sigma_ba_walk),
        ] {
            if !(v > 0.0) {
                return bad(format!("noise.{name} must be positive"));
            }
        }
        let s = &self.solver;
        if !(s.cost_tolerance > 0.0 && s.step_tolerance > 0.0 && s.initial_lambda > 0.0) {
            return bad("solver tolerances must be positive".into());
        }
        if !(s.lambda_up > 1.0 && s.lambda_down > 0.0 && s.lambda_down < 1.0) {
            return bad("solver lambda factors must satisfy up > 1 > down > 0".into());
        }
        let m = &self.maps;
        if !(m.voxel_resolution > 0.0) || m.voxel_cap == 0 || m.keyscan_capacity == 0 || m.knn < 3 {
            return bad("invalid maps section".into());
        }
        if m.grid_cols == 0 || m.grid_rows == 0 {
            return bad("maps grid must be non-empty".into());
        }
        let sim = &self.sim;
        if !matches!(sim.regime.as_str(), "smooth" | "violent" | "hybrid" | "static") {
            return bad(format!("unknown sim.regime {:?}", sim.regime));
        }
        if !(sim.duration > self.run.init_duration) {
            return bad("sim.duration must exceed run.init_duration".into());
        }
        if !(sim.imu_rate > 0.0 && sim.lidar_rate > 0.0 && sim.camera_rate > 0.0) {
            return bad("sensor rates must be positive".into());
        }
        if !(0.0..=1.0).contains(&sim.outlier_rate) {
            return bad("sim.outlier_rate must lie in [0, 1]".into());
        }
        let c = &self.calib;
        if !(c.fx > 0.0 && c.fy > 0.0 && c.width > 0.0 && c.height > 0.0) {
            return bad("intrinsics must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn roundtrip_and_override() {
        let cfg = Config::from_toml("[run]\nmode = \"uniform-4\"\n[noise]\nsigma_pixel = 2.0\n").unwrap();
        assert_eq!(cfg.mode().unwrap(), Mode::Uniform(4));
        assert_eq!(cfg.noise.sigma_pixel, 2.0);
        assert_eq!(Config::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn rejects_invalid() {
        assert!(Config::from_toml("[run]\nmode = \"uniform-17\"").is_err());
        assert!(Config::from_toml("[run]\ndt = 0.0").is_err());
        assert!(Config::from_toml("[placement]\ncounts = [1, 2]").is_err());
        assert!(Config::from_toml("[bogus]\nx = 1").is_err());
        assert!(Config::from_toml("[run\n").is_err());
    }

    #[test]
    fn mode_labels() {
        assert_eq!(Mode::parse("uni-3").unwrap().label(), "uniform-3");
        assert_eq!(Mode::parse("non-uni").unwrap(), Mode::NonUniform);
        assert!(Mode::parse("uniform-0").is_err());
    }
}
