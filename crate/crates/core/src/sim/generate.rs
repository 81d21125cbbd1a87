//! Sensor stream generation from the analytic ground truth.

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::motion::{GroundTruth, Regime};
use super::world::{PlaneWorld, POSITIVE_X_WALL};
use crate::config::Config;
use crate::error::ConfigError;
use crate::sensors::{gravity_world, Bias, CameraFrame, Extrinsics, ImuSample, Intrinsics, LidarPoint, LidarScan, PixelObservation};
use crate::spline::{io::sample_times, PoseSample};

const STREAM_IMU: u64 = 1;
const STREAM_LIDAR: u64 = 2;
const STREAM_CAMERA: u64 = 3;
const STREAM_MOTION: u64 = 4;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma.max(0.0)).expect("finite sigma")
}

/// Exact IMU reading of a ground-truth sample.
pub fn ideal_imu(s: &PoseSample, bias: &Bias) -> ImuSample {
    ImuSample {
        t: s.t,
        gyro: s.angular_velocity_body + bias.gyro,
        accel: s.rotation.matrix().transpose() * (s.linear_acceleration_world - gravity_world()) + bias.accel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuNoise {
    pub sigma_gyro: f64,
    pub sigma_accel: f64,
    /// Bias random-walk standard deviation per `interval` seconds.
    pub sigma_bg_walk: f64,
    pub sigma_ba_walk: f64,
    pub interval: f64,
}

/// IMU stream at `rate` and the true bias at every sample.
pub fn gen_imu(gt: &GroundTruth, rate: f64, noise: &ImuNoise, initial: Bias, seed: u64) -> (Vec<ImuSample>, Vec<Bias>) {
    let mut rng = rng_for(seed, STREAM_IMU);
    let per_interval = (rate * noise.interval).max(1.0);
    let (ng, na) = (gaussian(noise.sigma_gyro), gaussian(noise.sigma_accel));
    let (wg, wa) = (gaussian(noise.sigma_bg_walk / per_interval.sqrt()), gaussian(noise.sigma_ba_walk / per_interval.sqrt()));
    let mut bias = initial;
    let mut samples = Vec::new();
    let mut biases = Vec::new();
    for t in sample_times(0.0, gt.duration + 0.5 / rate, rate) {
        let mut m = ideal_imu(&gt.sample_unchecked(t), &bias);
        m.gyro += Vector3::from_fn(|_, _| ng.sample(&mut rng));
        m.accel += Vector3::from_fn(|_, _| na.sample(&mut rng));
        samples.push(m);
        biases.push(bias);
        bias.gyro += Vector3::from_fn(|_, _| wg.sample(&mut rng));
        bias.accel += Vector3::from_fn(|_, _| wa.sample(&mut rng));
    }
    (samples, biases)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPattern {
    pub rate: f64,
    pub rings: usize,
    pub fov_deg: f64,
    pub azimuth_step_deg: f64,
    pub min_range: f64,
    pub max_range: f64,
    pub range_noise: f64,
}

impl LidarPattern {
    pub fn from_config(c: &Config) -> Self {
        Self {
            rate: c.sim.lidar_rate,
            rings: c.sim.lidar_rings,
            fov_deg: c.sim.lidar_fov_deg,
            azimuth_step_deg: c.sim.lidar_azimuth_step_deg,
            min_range: 0.3,
            max_range: c.sim.lidar_max_range,
            range_noise: if c.sim.zero_noise { 0.0 } else { c.sim.range_noise },
        }
    }

    /// Unit ray directions of one column, lowest ring first.
    fn column(&self, azimuth: f64) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let rings = self.rings.max(1);
        (0..rings).map(move |r| {
            let el = if rings == 1 {
                0.0
            } else {
                (-self.fov_deg / 2.0 + self.fov_deg * r as f64 / (rings - 1) as f64).to_radians()
            };
            Vector3::new(el.cos() * azimuth.cos(), el.cos() * azimuth.sin(), el.sin())
        })
    }
}

/// One sweep starting at `t_start`; columns are timestamped across the sweep.
/// With `only_plane` set, returns that hit only that plane are kept.
pub fn gen_lidar_scan(
    gt: &GroundTruth,
    world: &PlaneWorld,
    t_start: f64,
    ext: &Extrinsics,
    pattern: &LidarPattern,
    only_plane: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> LidarScan {
    let period = 1.0 / pattern.rate;
    let n_az = (360.0 / pattern.azimuth_step_deg).round() as usize;
    let noise = gaussian(pattern.range_noise);
    let mut points = Vec::new();
    for a in 0..n_az {
        let t = t_start + period * a as f64 / n_az as f64;
        let s = gt.sample_unchecked(t);
        let r_wl = s.rotation.matrix() * ext.imu_lidar.rotation.to_rotation_matrix().matrix();
        let origin = s.rotation.matrix() * ext.imu_lidar.translation.vector + s.position;
        let azimuth = (a as f64 * pattern.azimuth_step_deg).to_radians();
        for dir in pattern.column(azimuth) {
            let Some((range, _)) = world.cast(&origin, &(r_wl * dir), only_plane) else { continue };
            let range = range + noise.sample(rng);
            if range < pattern.min_range || range > pattern.max_range {
                continue;
            }
            points.push(LidarPoint { t, point: dir * range });
        }
    }
    LidarScan { t_start, points }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelNoise {
    pub sigma: f64,
    pub outlier_rate: f64,
    pub outlier_px: f64,
    pub depth_min: f64,
}

/// Visible landmarks projected into the camera at `t`, with the ids of the
/// observations displaced as outliers.
pub fn gen_camera_frame(
    gt: &GroundTruth,
    world: &PlaneWorld,
    landmarks: &[(u64, Vector3<f64>)],
    t: f64,
    ext: &Extrinsics,
    intr: &Intrinsics,
    noise: &PixelNoise,
    rng: &mut ChaCha8Rng,
) -> (CameraFrame, Vec<u64>) {
    let s = gt.sample_unchecked(t);
    let r_wc = s.rotation.matrix() * ext.imu_camera.rotation.to_rotation_matrix().matrix();
    let center = s.rotation.matrix() * ext.imu_camera.translation.vector + s.position;
    let pixel_noise = gaussian(noise.sigma);
    let mut observations = Vec::new();
    let mut outliers = Vec::new();
    for (id, x) in landmarks {
        let c = r_wc.transpose() * (x - center);
        if c.z <= noise.depth_min {
            continue;
        }
        let px = intr.project(&c);
        if !intr.contains(&px) {
            continue;
        }
        let dist = (x - center).norm();
        if world.cast(&center, &((x - center) / dist), None).is_some_and(|(hit, _)| hit < dist - 1e-6) {
            continue;
        }
        let mut pixel = px + Vector2::new(pixel_noise.sample(rng), pixel_noise.sample(rng));
        if noise.outlier_rate > 0.0 && rng.random_bool(noise.outlier_rate.min(1.0)) {
            let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let shift = Vector2::new(ang.cos(), ang.sin()) * noise.outlier_px;
            if intr.contains(&(pixel + shift)) {
                pixel += shift;
                outliers.push(*id);
            } else if intr.contains(&(pixel - shift)) {
                pixel -= shift;
                outliers.push(*id);
            }
        }
        observations.push(PixelObservation { landmark_id: *id, pixel });
    }
    (CameraFrame { t, observations }, outliers)
}

/// Ground truth plus every sensor stream of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimBundle {
    pub config: Config,
    pub gt: GroundTruth,
    pub world: PlaneWorld,
    pub landmarks: Vec<(u64, Vector3<f64>)>,
    pub imu: Vec<ImuSample>,
    pub true_bias: Vec<Bias>,
    pub scans: Vec<LidarScan>,
    pub frames: Vec<CameraFrame>,
    /// Per frame, landmark ids whose pixel was replaced by an outlier.
    pub outliers: Vec<Vec<u64>>,
}

pub fn ground_truth(config: &Config) -> Result<GroundTruth, ConfigError> {
    let regime = Regime::parse(&config.sim.regime)?;
    let mut rng = rng_for(config.run.seed, STREAM_MOTION);
    Ok(GroundTruth::new(regime, config.sim.duration, rng.random()))
}

pub fn simulate(config: &Config) -> Result<SimBundle, ConfigError> {
    config.validate()?;
    let sim = &config.sim;
    let seed = config.run.seed;
    let gt = ground_truth(config)?;
    let world = PlaneWorld::room();
    let landmarks = world.landmarks(sim.landmark_spacing);
    let ext = Extrinsics::from_config(&config.calib);
    let intr = Intrinsics::from_config(&config.calib);
    let quiet = sim.zero_noise;

    let imu_noise = ImuNoise {
        sigma_gyro: if quiet { 0.0 } else { config.noise.sigma_gyro },
        sigma_accel: if quiet { 0.0 } else { config.noise.sigma_accel },
        sigma_bg_walk: if quiet { 0.0 } else { config.noise.sigma_bg_walk },
        sigma_ba_walk: if quiet { 0.0 } else { config.noise.sigma_ba_walk },
        interval: config.run.dt,
    };
    let initial = if quiet {
        Bias::default()
    } else {
        Bias {
            gyro: Vector3::from(sim.initial_bg),
            accel: Vector3::from(sim.initial_ba),
        }
    };
    let (imu, true_bias) = gen_imu(&gt, sim.imu_rate, &imu_noise, initial, seed);

    let pattern = LidarPattern::from_config(config);
    let mut lidar_rng = rng_for(seed, STREAM_LIDAR);
    let mut scans = Vec::new();
    for t in sample_times(0.0, sim.duration, sim.lidar_rate) {
        if t + 1.0 / sim.lidar_rate > sim.duration + 1e-9 {
            break;
        }
        let degenerate = sim.degenerate_span.is_some_and(|[a, b]| t + 1.0 / sim.lidar_rate > a && t < b);
        let only = degenerate.then_some(POSITIVE_X_WALL);
        scans.push(gen_lidar_scan(&gt, &world, t, &ext, &pattern, only, &mut lidar_rng));
    }

    let pixel = PixelNoise {
        sigma: if quiet { 0.0 } else { sim.pixel_noise },
        outlier_rate: if quiet { 0.0 } else { sim.outlier_rate },
        outlier_px: sim.outlier_px,
        depth_min: config.maps.depth_min,
    };
    let mut cam_rng = rng_for(seed, STREAM_CAMERA);
    let mut frames = Vec::new();
    let mut outliers = Vec::new();
    for t in sample_times(0.0, sim.duration + 1e-9, sim.camera_rate) {
        let (frame, out) = gen_camera_frame(&gt, &world, &landmarks, t, &ext, &intr, &pixel, &mut cam_rng);
        frames.push(frame);
        outliers.push(out);
    }

    Ok(SimBundle {
        config: config.clone(),
        gt,
        world,
        landmarks,
        imu,
        true_bias,
        scans,
        frames,
        outliers,
    })
}
