//! Per-interval choice of how many control points to append.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::config::PlacementSection;
use crate::error::{ConfigError, SplineError};
use crate::sensors::{Bias, ImuSample};
use crate::so3;
use crate::spline::Trajectory;

/// Averaged world-frame motion over one interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionStats {
    /// Norm of the averaged world-frame angular velocity, rad/s.
    pub gyro_norm: f64,
    /// Norm of the averaged gravity-compensated world-frame acceleration, m/s^2.
    pub accel_norm: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPolicy {
    gyro_thresholds: Vec<f64>,
    accel_thresholds: Vec<f64>,
    counts: Vec<usize>,
}

impl PlacementPolicy {
    /// Thresholds are the inclusive lower bounds of each gear.
    pub fn new(gyro_thresholds: Vec<f64>, accel_thresholds: Vec<f64>, counts: Vec<usize>) -> Result<Self, ConfigError> {
        let n = counts.len();
        if n == 0 || gyro_thresholds.len() != n || accel_thresholds.len() != n {
            return Err(ConfigError::Invalid("placement lists must be non-empty and of equal length".into()));
        }
        if counts[0] == 0 || counts.windows(2).any(|w| w[1] < w[0]) || counts[n - 1] > 8 {
            return Err(ConfigError::Invalid("placement counts must be positive, non-decreasing, at most 8".into()));
        }
        for t in [&gyro_thresholds, &accel_thresholds] {
            if t[0] != 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(ConfigError::Invalid("placement thresholds must start at 0 and increase".into()));
            }
        }
        Ok(Self {
            gyro_thresholds,
            accel_thresholds,
            counts,
        })
    }

    pub fn from_config(c: &PlacementSection) -> Result<Self, ConfigError> {
        Self::new(c.gyro_thresholds.clone(), c.accel_thresholds.clone(), c.counts.clone())
    }

    pub fn max_count(&self) -> usize {
        *self.counts.last().unwrap()
    }
}

impl Default for PlacementPolicy {
    fn default() -> Self {
        Self::from_config(&PlacementSection::default()).unwrap()
    }
}

/// Integrates the gyro from `r_start` (midpoint rule, bias-compensated) and
/// averages the world-frame angular rate and gravity-compensated acceleration.
/// Returns `None` for an empty window.
pub fn motion_stats(
    imu: &[ImuSample],
    r_start: &Matrix3<f64>,
    gravity: &Vector3<f64>,
    bias: &Bias,
) -> Option<MotionStats> {
    if imu.is_empty() {
        return None;
    }
    let mut r = *r_start;
    let mut sum_w = Vector3::zeros();
    let mut sum_a = Vector3::zeros();
    for (k, s) in imu.iter().enumerate() {
        let w = s.gyro - bias.gyro;
        sum_w += r * w;
        sum_a += r * (s.accel - bias.accel) + gravity;
        if let Some(next) = imu.get(k + 1) {
            let w_mid = 0.5 * (w + next.gyro - bias.gyro);
            r *= so3::exp(&(w_mid * (next.t - s.t)));
        }
    }
    let n = imu.len() as f64;
    Some(MotionStats {
        gyro_norm: sum_w.norm() / n,
        accel_norm: sum_a.norm() / n,
        samples: imu.len(),
    })
}

fn gear(value: f64, thresholds: &[f64]) -> usize {
    thresholds.iter().rposition(|&lo| value >= lo).unwrap_or(0)
}

/// Larger of the gyro and accelerometer gear counts.
pub fn decide_count(stats: &MotionStats, policy: &PlacementPolicy) -> usize {
    let g = gear(stats.gyro_norm, &policy.gyro_thresholds);
    let a = gear(stats.accel_norm, &policy.accel_thresholds);
    policy.counts[g].max(policy.counts[a])
}

/// Gyro-integrated rotation at the last sample of `imu`, starting from `r_start`.
pub fn propagate_rotation(imu: &[ImuSample], r_start: &Matrix3<f64>, bias: &Bias) -> Matrix3<f64> {
    let mut r = *r_start;
    for w in imu.windows(2) {
        let w_mid = 0.5 * (w[0].gyro + w[1].gyro) - bias.gyro;
        r *= so3::exp(&(w_mid * (w[1].t - w[0].t)));
    }
    r
}

/// The `n_cp` knots that evenly split `(start, end]`; the last is exactly `end`.
pub fn interval_knots(start: f64, end: f64, n_cp: usize) -> Vec<f64> {
    let dt = end - start;
    (1..=n_cp)
        .map(|j| if j == n_cp { end } else { start + dt * j as f64 / n_cp as f64 })
        .collect()
}

/// Appends `n_cp` knots that evenly split `[current end, t_end)` and copies
/// the last control point into each new one.
pub fn append_and_initialize(traj: &mut Trajectory, n_cp: usize, t_end: f64) -> Result<(), SplineError> {
    if n_cp == 0 {
        return Err(SplineError::TooFewControlPoints(0));
    }
    let knots = interval_knots(traj.domain().1, t_end, n_cp);
    let q: UnitQuaternion<f64> = *traj.rotations().last().unwrap();
    let p = *traj.positions().last().unwrap();
    traj.extend(&knots, &vec![q; n_cp], &vec![p; n_cp])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::gravity_world;
    use approx::assert_relative_eq;

    fn constant(n: usize, gyro: Vector3<f64>, accel: Vector3<f64>) -> Vec<ImuSample> {
        (0..n).map(|k| ImuSample { t: k as f64 / 400.0, gyro, accel }).collect()
    }

    #[test]
    fn stationary_and_free_fall() {
        let g = gravity_world();
        let level = constant(40, Vector3::zeros(), Vector3::new(0.0, 0.0, 9.8));
        let s = motion_stats(&level, &Matrix3::identity(), &g, &Bias::default()).unwrap();
        assert_eq!(s.gyro_norm, 0.0);
        assert!(s.accel_norm < 1e-12);
        let fall = constant(40, Vector3::zeros(), Vector3::zeros());
        let s = motion_stats(&fall, &Matrix3::identity(), &g, &Bias::default()).unwrap();
        assert_relative_eq!(s.accel_norm, 9.8, epsilon = 1e-12);
        assert!(motion_stats(&[], &Matrix3::identity(), &g, &Bias::default()).is_none());
    }

    #[test]
    fn z_spin_keeps_norm() {
        let spin = constant(40, Vector3::z(), Vector3::new(0.0, 0.0, 9.8));
        let s = motion_stats(&spin, &Matrix3::identity(), &gravity_world(), &Bias::default()).unwrap();
        assert_relative_eq!(s.gyro_norm, 1.0, epsilon = 1e-12);
        assert_eq!(s.samples, 40);
    }

    #[test]
    fn default_table() {
        let p = PlacementPolicy::default();
        let st = |g, a| MotionStats { gyro_norm: g, accel_norm: a, samples: 1 };
        assert_eq!(decide_count(&st(0.1, 0.3), &p), 1);
        assert_eq!(decide_count(&st(3.5, 0.3), &p), 4);
        assert_eq!(decide_count(&st(0.5, 0.0), &p), 2);
        assert_eq!(decide_count(&st(0.0, 3.0), &p), 3);
        assert_eq!(decide_count(&st(0.4999, 0.9999), &p), 1);
    }

    #[test]
    fn append_subdivides_interval() {
        let mut traj = Trajectory::stationary(0.9, 0.1, UnitQuaternion::identity(), Vector3::zeros());
        let before = traj.eval_pose(0.95).unwrap();
        append_and_initialize(&mut traj, 4, 1.1).unwrap();
        let k = traj.knots().as_slice();
        let tail = &k[k.len() - 4..];
        for (j, t) in tail.iter().enumerate() {
            assert_relative_eq!(*t, 1.0 + 0.025 * (j + 1) as f64, epsilon = 1e-12);
        }
        assert_eq!(traj.domain().1, 1.1);
        assert_eq!(traj.eval_pose(0.95).unwrap(), before);
        assert!(append_and_initialize(&mut traj, 0, 1.2).is_err());
    }

    #[test]
    fn invalid_policies() {
        assert!(PlacementPolicy::new(vec![0.0], vec![0.0, 1.0], vec![1]).is_err());
        assert!(PlacementPolicy::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![2, 1]).is_err());
        assert!(PlacementPolicy::new(vec![0.0, 1.0], vec![0.0, 1.0], vec![1, 9]).is_err());
        assert!(PlacementPolicy::new(vec![0.1, 1.0], vec![0.0, 1.0], vec![1, 2]).is_err());
    }
}
