//! Measurement records and rig calibration shared by the simulator and the estimator.

use nalgebra::{Isometry3, Matrix2x3, Quaternion, Translation3, UnitQuaternion, Vector2, Vector3};

use crate::config::CalibSection;

/// Standard gravity magnitude, m/s^2.
pub const GRAVITY: f64 = 9.8;

/// World gravity used by the simulator; the estimator re-estimates its direction.
pub fn gravity_world() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, -GRAVITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t: f64,
    pub gyro: Vector3<f64>,
    /// Specific force `R^T (a - g)`.
    pub accel: Vector3<f64>,
}

/// One LiDAR return in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub t: f64,
    pub point: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LidarScan {
    pub t_start: f64,
    pub points: Vec<LidarPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelObservation {
    pub landmark_id: u64,
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraFrame {
    pub t: f64,
    pub observations: Vec<PixelObservation>,
}

/// Gyro and accelerometer biases.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Bias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// Sensor-to-IMU rigid transforms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsics {
    pub imu_lidar: Isometry3<f64>,
    pub imu_camera: Isometry3<f64>,
}

impl Extrinsics {
    pub fn identity() -> Self {
        Self {
            imu_lidar: Isometry3::identity(),
            imu_camera: Isometry3::identity(),
        }
    }

    pub fn from_config(c: &CalibSection) -> Self {
        let iso = |q: [f64; 4], t: [f64; 3]| {
            Isometry3::from_parts(
                Translation3::new(t[0], t[1], t[2]),
                UnitQuaternion::from_quaternion(Quaternion::new(q[3], q[0], q[1], q[2])),
            )
        };
        Self {
            imu_lidar: iso(c.imu_lidar_rotation, c.imu_lidar_translation),
            imu_camera: iso(c.imu_camera_rotation, c.imu_camera_translation),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn from_config(c: &CalibSection) -> Self {
        Self {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }

    /// Pinhole projection of a camera-frame point (no depth check).
    pub fn project(&self, p: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz * iz,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz * iz,
        )
    }

    /// Unit-depth ray through a pixel.
    pub fn unproject(&self, px: &Vector2<f64>) -> Vector3<f64> {
        Vector3::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= 0.0 && px.x < self.width && px.y >= 0.0 && px.y < self.height
    }
}
