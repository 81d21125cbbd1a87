//! Measurement residuals with analytic Jacobians w.r.t. spline control points.
//!
//! Residuals are returned unwhitened; each factor exposes its `sigma` and the
//! solver divides by it. Rotation control points are perturbed on the right,
//! `R_m <- R_m Exp(phi)`.

use nalgebra::{Matrix3, Matrix6, RowVector3, SMatrix, SVector, Vector2, Vector3, Vector6};

use crate::error::SplineError;
use crate::sensors::{Bias, Extrinsics, Intrinsics};
use crate::so3;
use crate::spline::{PoseQuery, PoseSample, SegmentEval, Trajectory};

/// Residual plus Jacobian blocks for the four control points of one segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Linearized<const M: usize> {
    pub residual: SVector<f64, M>,
    /// Global index of the first of the four control points.
    pub first_cp: usize,
    pub rot: [SMatrix<f64, M, 3>; 4],
    pub pos: [SMatrix<f64, M, 3>; 4],
}

/// Point-to-plane distance of a LiDAR point transformed at its own timestamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPlanarFactor {
    pub point_lidar: Vector3<f64>,
    pub t: f64,
    pub normal: Vector3<f64>,
    pub d: f64,
    pub sigma: f64,
}

impl LidarPlanarFactor {
    pub fn residual_at(&self, rotation: &Matrix3<f64>, position: &Vector3<f64>, ext: &Extrinsics) -> f64 {
        let q = ext.imu_lidar * nalgebra::Point3::from(self.point_lidar);
        self.normal.dot(&(rotation * q.coords + position)) + self.d
    }

    pub fn evaluate(&self, traj: &dyn PoseQuery, ext: &Extrinsics) -> Result<f64, SplineError> {
        let s = traj.sample(self.t)?;
        Ok(self.residual_at(s.rotation.matrix(), &s.position, ext))
    }

    pub fn linearize(&self, traj: &Trajectory, ext: &Extrinsics) -> Result<Linearized<1>, SplineError> {
        let seg = traj.segment_at(self.t)?;
        let ev = SegmentEval::new(&seg, false);
        let q = (ext.imu_lidar * nalgebra::Point3::from(self.point_lidar)).coords;
        let r = self.normal.dot(&(ev.rotation * q + ev.position)) + self.d;
        let d_theta: RowVector3<f64> = -self.normal.transpose() * ev.rotation * so3::hat(&q);
        let jr = ev.rotation_jacobians();
        let (beta, _, _) = ev.position_weights();
        Ok(Linearized {
            residual: SVector::<f64, 1>::new(r),
            first_cp: seg.first_control_point(),
            rot: std::array::from_fn(|m| d_theta * jr[m]),
            pos: std::array::from_fn(|m| self.normal.transpose() * beta[m]),
        })
    }
}

/// Pixel error of a known world point observed by the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReprojectionFactor {
    pub map_point_world: Vector3<f64>,
    pub observed_pixel: Vector2<f64>,
    pub t: f64,
    pub intrinsics: Intrinsics,
    pub sigma: f64,
    pub cauchy_scale: f64,
    pub depth_min: f64,
}

impl ReprojectionFactor {
    /// Body-frame point and camera-frame point.
    fn transform(&self, rotation: &Matrix3<f64>, position: &Vector3<f64>, ext: &Extrinsics) -> (Vector3<f64>, Vector3<f64>) {
        let w = rotation.transpose() * (self.map_point_world - position);
        let rc = ext.imu_camera.rotation.to_rotation_matrix().into_inner();
        let c = rc.transpose() * (w - ext.imu_camera.translation.vector);
        (w, c)
    }

    /// `None` when the point lies closer than `depth_min` along the optical axis.
    pub fn residual_at(&self, rotation: &Matrix3<f64>, position: &Vector3<f64>, ext: &Extrinsics) -> Option<Vector2<f64>> {
        let (_, c) = self.transform(rotation, position, ext);
        (c.z > self.depth_min).then(|| self.intrinsics.project(&c) - self.observed_pixel)
    }

    pub fn evaluate(&self, traj: &dyn PoseQuery, ext: &Extrinsics) -> Result<Option<Vector2<f64>>, SplineError> {
        let s = traj.sample(self.t)?;
        Ok(self.residual_at(s.rotation.matrix(), &s.position, ext))
    }

    pub fn linearize(&self, traj: &Trajectory, ext: &Extrinsics) -> Result<Option<Linearized<2>>, SplineError> {
        let seg = traj.segment_at(self.t)?;
        let ev = SegmentEval::new(&seg, false);
        let (w, c) = self.transform(&ev.rotation, &ev.position, ext);
        if c.z <= self.depth_min {
            return Ok(None);
        }
        let rc_t = ext.imu_camera.rotation.to_rotation_matrix().into_inner().transpose();
        let d_pix_d_w = self.intrinsics.project_jacobian(&c) * rc_t;
        let d_theta = d_pix_d_w * so3::hat(&w);
        let d_p = -d_pix_d_w * ev.rotation.transpose();
        let jr = ev.rotation_jacobians();
        let (beta, _, _) = ev.position_weights();
        Ok(Some(Linearized {
            residual: self.intrinsics.project(&c) - self.observed_pixel,
            first_cp: seg.first_control_point(),
            rot: std::array::from_fn(|m| d_theta * jr[m]),
            pos: std::array::from_fn(|m| d_p * beta[m]),
        }))
    }
}

/// Direct gyro + accelerometer residual `(omega - w_m + b_g, a_body - a_m + b_a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuFactor {
    pub t: f64,
    pub gyro_meas: Vector3<f64>,
    pub accel_meas: Vector3<f64>,
    pub sigma_g: f64,
    pub sigma_a: f64,
}

impl ImuFactor {
    pub fn residual_at(&self, s: &PoseSample, bias: &Bias, gravity: &Vector3<f64>) -> Vector6<f64> {
        let a_body = s.rotation.matrix().transpose() * (s.linear_acceleration_world - gravity);
        let rg = s.angular_velocity_body - self.gyro_meas + bias.gyro;
        let ra = a_body - self.accel_meas + bias.accel;
        Vector6::new(rg.x, rg.y, rg.z, ra.x, ra.y, ra.z)
    }

    pub fn evaluate(&self, traj: &dyn PoseQuery, bias: &Bias, gravity: &Vector3<f64>) -> Result<Vector6<f64>, SplineError> {
        Ok(self.residual_at(&traj.sample(self.t)?, bias, gravity))
    }

    /// Bias Jacobians are identity blocks (gyro rows 0..3, accel rows 3..6).
    pub fn linearize(&self, traj: &Trajectory, bias: &Bias, gravity: &Vector3<f64>) -> Result<Linearized<6>, SplineError> {
        let seg = traj.segment_at(self.t)?;
        let ev = SegmentEval::new(&seg, true);
        let residual = self.residual_at(&ev.to_sample(self.t), bias, gravity);
        let a_body = ev.rotation.transpose() * (ev.acceleration - gravity);
        let jr = ev.rotation_jacobians();
        let jw = ev.omega_jacobians();
        let (_, _, accel_w) = ev.position_weights();
        let rt = ev.rotation.transpose();
        let ha = so3::hat(&a_body);
        let rot = std::array::from_fn(|m| {
            let mut b = SMatrix::<f64, 6, 3>::zeros();
            b.fixed_view_mut::<3, 3>(0, 0).copy_from(&jw[m]);
            b.fixed_view_mut::<3, 3>(3, 0).copy_from(&(ha * jr[m]));
            b
        });
        let pos = std::array::from_fn(|m| {
            let mut b = SMatrix::<f64, 6, 3>::zeros();
            b.fixed_view_mut::<3, 3>(3, 0).copy_from(&(rt * accel_w[m]));
            b
        });
        Ok(Linearized {
            residual,
            first_cp: seg.first_control_point(),
            rot,
            pos,
        })
    }

    /// Per-row standard deviations.
    pub fn sigmas(&self) -> Vector6<f64> {
        let (g, a) = (self.sigma_g, self.sigma_a);
        Vector6::new(g, g, g, a, a, a)
    }
}

/// Random-walk coupling of consecutive bias states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasFactor {
    pub sigma_bg_walk: f64,
    pub sigma_ba_walk: f64,
}

impl BiasFactor {
    pub fn residual(&self, prev: &Bias, curr: &Bias) -> Vector6<f64> {
        let g = curr.gyro - prev.gyro;
        let a = curr.accel - prev.accel;
        Vector6::new(g.x, g.y, g.z, a.x, a.y, a.z)
    }

    pub fn sigmas(&self) -> Vector6<f64> {
        let (g, a) = (self.sigma_bg_walk, self.sigma_ba_walk);
        Vector6::new(g, g, g, a, a, a)
    }

    pub fn whitened(&self, prev: &Bias, curr: &Bias) -> Vector6<f64> {
        self.residual(prev, curr).component_div(&self.sigmas())
    }

    /// Unwhitened Jacobians w.r.t. `(prev, curr)`, columns ordered gyro then accel.
    pub fn jacobians(&self) -> (Matrix6<f64>, Matrix6<f64>) {
        (-Matrix6::identity(), Matrix6::identity())
    }
}

/// IRLS weight of the Cauchy kernel `rho(s) = c^2 log(1 + s / c^2)`, `s = r^2`.
pub fn cauchy_weight(residual_norm: f64, scale: f64) -> f64 {
    let x = residual_norm / scale;
    1.0 / (1.0 + x * x)
}

/// Half the Cauchy loss of a squared residual norm.
pub fn cauchy_cost(squared_norm: f64, scale: f64) -> f64 {
    let c2 = scale * scale;
    0.5 * c2 * (squared_norm / c2).ln_1p()
}

/// Central finite differences of `f` w.r.t. the four control points starting
/// at `first_cp` (rotations perturbed on the right).
pub fn numeric_cp_jacobian<const M: usize>(
    traj: &Trajectory,
    first_cp: usize,
    h: f64,
    f: impl Fn(&Trajectory) -> SVector<f64, M>,
) -> ([SMatrix<f64, M, 3>; 4], [SMatrix<f64, M, 3>; 4]) {
    let mut rot = [SMatrix::<f64, M, 3>::zeros(); 4];
    let mut pos = [SMatrix::<f64, M, 3>::zeros(); 4];
    let mut work = traj.clone();
    for m in 0..4 {
        let idx = first_cp + m;
        let (q0, p0) = (traj.rotations()[idx], traj.positions()[idx]);
        for c in 0..3 {
            let e = Vector3::ith(c, h);
            work.set_control_point(idx, q0 * so3::exp_quat(&e), p0);
            let plus = f(&work);
            work.set_control_point(idx, q0 * so3::exp_quat(&-e), p0);
            let minus = f(&work);
            rot[m].set_column(c, &((plus - minus) / (2.0 * h)));
            work.set_control_point(idx, q0, p0 + e);
            let plus = f(&work);
            work.set_control_point(idx, q0, p0 - e);
            let minus = f(&work);
            pos[m].set_column(c, &((plus - minus) / (2.0 * h)));
            work.set_control_point(idx, q0, p0);
        }
    }
    (rot, pos)
}

/// `|analytic - numeric|_F / max(|numeric|_F, floor)` over all eight blocks.
pub fn jacobian_relative_error<const M: usize>(
    lin: &Linearized<M>,
    numeric: &([SMatrix<f64, M, 3>; 4], [SMatrix<f64, M, 3>; 4]),
    floor: f64,
) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for m in 0..4 {
        diff += (lin.rot[m] - numeric.0[m]).norm_squared() + (lin.pos[m] - numeric.1[m]).norm_squared();
        norm += numeric.0[m].norm_squared() + numeric.1[m].norm_squared();
    }
    diff.sqrt() / norm.sqrt().max(floor)
}

#[cfg(test)]
mod tests;
