//! SO(3) exponential/logarithm maps and their Jacobians.
//!
//! Rotation increments are right-multiplied throughout the crate:
//! `R <- R * Exp(delta)`.

use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

/// Below this angle the closed forms are replaced by their Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

#[inline]
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues formula.
pub fn exp(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(v);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn exp_quat(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta = v.norm();
    let half = 0.5 * theta;
    let (w, s) = if theta < SMALL_ANGLE {
        (1.0 - theta * theta / 8.0, 0.5 - theta * theta / 48.0)
    } else {
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_unchecked(Quaternion::new(w, s * v.x, s * v.y, s * v.z))
}

/// Rotation vector of a unit quaternion, in `[0, pi]` angle range.
pub fn log_quat(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let q = q.quaternion();
    let (w, v) = if q.w < 0.0 {
        (-q.w, -q.imag())
    } else {
        (q.w, q.imag())
    };
    let sin_half = v.norm();
    if sin_half < SMALL_ANGLE {
        // atan2(s, w) / s ~ 1/w for small s
        v * (2.0 / w)
    } else {
        let angle = 2.0 * sin_half.atan2(w);
        v * (angle / sin_half)
    }
}

pub fn log(r: &Matrix3<f64>) -> Vector3<f64> {
    let q = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(*r));
    log_quat(&q)
}

/// Right Jacobian: `Exp(v + d) ~ Exp(v) Exp(Jr(v) d)`.
pub fn right_jacobian(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(v);
    let (a, b) = if theta < 1e-5 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        ((1.0 - theta.cos()) / theta2, (theta - theta.sin()) / (theta2 * theta))
    };
    Matrix3::identity() - k * a + k * k * b
}

pub fn right_jacobian_inv(v: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = v.norm_squared();
    let theta = theta2.sqrt();
    let k = hat(v);
    let c = if theta < 1e-5 {
        1.0 / 12.0 + theta2 / 720.0
    } else {
        1.0 / theta2 - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() + k * 0.5 + k * k * c
}

/// Left Jacobian inverse, `Jr^{-1}(-v)`.
pub fn left_jacobian_inv(v: &Vector3<f64>) -> Matrix3<f64> {
    right_jacobian_inv(&(-v))
}

/// Geodesic distance between two rotations, radians.
pub fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    log(&(a.transpose() * b)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_log_roundtrip() {
        for v in [
            Vector3::new(0.1, -0.2, 0.3),
            Vector3::new(1e-10, 0.0, -2e-10),
            Vector3::new(0.0, 3.0, 0.1),
            Vector3::zeros(),
        ] {
            assert_relative_eq!(log(&exp(&v)), v, epsilon = 1e-12);
            assert_relative_eq!(log_quat(&exp_quat(&v)), v, epsilon = 1e-12);
            assert_relative_eq!(exp_quat(&v).to_rotation_matrix().into_inner(), exp(&v), epsilon = 1e-14);
        }
    }

    #[test]
    fn right_jacobian_matches_finite_difference() {
        let v = Vector3::new(0.4, -0.7, 0.2);
        let jr = right_jacobian(&v);
        let h = 1e-6;
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let plus = log(&(exp(&v).transpose() * exp(&(v + e))));
            let minus = log(&(exp(&v).transpose() * exp(&(v - e))));
            let col = (plus - minus) / (2.0 * h);
            assert_relative_eq!(col, jr.column(k).into_owned(), epsilon = 1e-8);
        }
        assert_relative_eq!(right_jacobian_inv(&v) * jr, Matrix3::identity(), epsilon = 1e-12);
        let tiny = Vector3::new(1e-7, 2e-7, -1e-7);
        assert_relative_eq!(right_jacobian_inv(&tiny) * right_jacobian(&tiny), Matrix3::identity(), epsilon = 1e-12);
    }

    #[test]
    fn log_near_pi_is_stable() {
        let v = Vector3::new(0.0, 0.0, std::f64::consts::PI - 1e-9);
        assert_relative_eq!(log(&exp(&v)).norm(), v.norm(), epsilon = 1e-8);
    }
}
