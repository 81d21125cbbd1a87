use super::*;
use crate::spline::KnotVector;
use approx::assert_relative_eq;
use nalgebra::{Isometry3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn vec3(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
    Vector3::new(rng.random_range(-s..s), rng.random_range(-s..s), rng.random_range(-s..s))
}

fn random_traj(rng: &mut ChaCha8Rng) -> Trajectory {
    let mut t = 0.0;
    let knots: Vec<f64> = (0..9)
        .map(|_| {
            t += rng.random_range(0.02..0.15);
            t
        })
        .collect();
    let mut q = UnitQuaternion::from_scaled_axis(vec3(rng, 1.0));
    let mut rots = Vec::new();
    let mut pos = Vec::new();
    for _ in 0..8 {
        q *= UnitQuaternion::from_scaled_axis(vec3(rng, 0.3));
        rots.push(q);
        pos.push(vec3(rng, 1.0));
    }
    Trajectory::new(KnotVector::new(knots).unwrap(), rots, pos).unwrap()
}

fn random_ext(rng: &mut ChaCha8Rng) -> Extrinsics {
    let iso = |rng: &mut ChaCha8Rng| Isometry3::from_parts(vec3(rng, 0.2).into(), UnitQuaternion::from_scaled_axis(vec3(rng, 1.0)));
    Extrinsics {
        imu_lidar: iso(rng),
        imu_camera: iso(rng),
    }
}

fn intrinsics() -> Intrinsics {
    Intrinsics {
        fx: 100.0,
        fy: 100.0,
        cx: 50.0,
        cy: 50.0,
        width: 100.0,
        height: 100.0,
    }
}

fn static_traj() -> Trajectory {
    Trajectory::stationary(0.0, 0.1, UnitQuaternion::identity(), Vector3::zeros())
}

#[test]
fn lidar_examples() {
    let traj = static_traj();
    let ext = Extrinsics::identity();
    let mut f = LidarPlanarFactor {
        point_lidar: Vector3::new(0.3, -0.2, 2.0),
        t: 0.05,
        normal: Vector3::z(),
        d: -2.0,
        sigma: 0.05,
    };
    assert!(f.evaluate(&traj, &ext).unwrap().abs() < 1e-15);
    f.point_lidar = Vector3::new(0.0, 0.0, 3.0);
    assert_relative_eq!(f.evaluate(&traj, &ext).unwrap(), 1.0, epsilon = 1e-15);
    f.t = 0.2;
    assert!(f.evaluate(&traj, &ext).is_err());
}

#[test]
fn reprojection_examples() {
    let traj = static_traj();
    let ext = Extrinsics::identity();
    let mut f = ReprojectionFactor {
        map_point_world: Vector3::new(0.0, 0.0, 4.0),
        observed_pixel: Vector2::new(50.0, 50.0),
        t: 0.05,
        intrinsics: intrinsics(),
        sigma: 1.5,
        cauchy_scale: 2.0,
        depth_min: 0.05,
    };
    assert_eq!(f.evaluate(&traj, &ext).unwrap().unwrap(), Vector2::zeros());
    f.observed_pixel = Vector2::new(52.0, 50.0);
    assert_eq!(f.evaluate(&traj, &ext).unwrap().unwrap(), Vector2::new(-2.0, 0.0));
    f.map_point_world = Vector3::new(0.0, 0.0, -1.0);
    assert!(f.evaluate(&traj, &ext).unwrap().is_none());
    assert!(f.linearize(&traj, &ext).unwrap().is_none());
}

#[test]
fn imu_examples() {
    let traj = static_traj();
    let g = Vector3::new(0.0, 0.0, -9.8);
    let f = ImuFactor {
        t: 0.05,
        gyro_meas: Vector3::zeros(),
        accel_meas: Vector3::new(0.0, 0.0, 9.8),
        sigma_g: 1.7e-3,
        sigma_a: 2e-2,
    };
    assert!(f.evaluate(&traj, &Bias::default(), &g).unwrap().norm() < 1e-15);
    let b = Bias {
        gyro: Vector3::new(0.01, 0.0, 0.0),
        accel: Vector3::zeros(),
    };
    let r = f.evaluate(&traj, &b, &g).unwrap();
    assert_relative_eq!(r, Vector6::new(0.01, 0.0, 0.0, 0.0, 0.0, 0.0), epsilon = 1e-15);
}

#[test]
fn imu_residual_vanishes_on_synthesized_measurements() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let g = Vector3::new(0.0, 0.0, -9.8);
    for _ in 0..50 {
        let traj = random_traj(&mut rng);
        let (a, b) = traj.domain();
        let t = rng.random_range(a..b);
        let s = traj.eval_derivatives(t).unwrap();
        let bias = Bias {
            gyro: vec3(&mut rng, 0.01),
            accel: vec3(&mut rng, 0.1),
        };
        let f = ImuFactor {
            t,
            gyro_meas: s.angular_velocity_body + bias.gyro,
            accel_meas: s.rotation.matrix().transpose() * (s.linear_acceleration_world - g) + bias.accel,
            sigma_g: 1.0,
            sigma_a: 1.0,
        };
        assert!(f.evaluate(&traj, &bias, &g).unwrap().norm() < 1e-10);
    }
}

#[test]
fn bias_examples() {
    let f = BiasFactor {
        sigma_bg_walk: 1e-4,
        sigma_ba_walk: 1e-3,
    };
    let a = Bias::default();
    assert_eq!(f.residual(&a, &a), Vector6::zeros());
    let b = Bias {
        gyro: Vector3::new(0.0, 0.0, 1e-3),
        accel: Vector3::zeros(),
    };
    assert_eq!(f.residual(&a, &b), Vector6::new(0.0, 0.0, 1e-3, 0.0, 0.0, 0.0));
    assert_relative_eq!(f.whitened(&a, &b)[2], 10.0, epsilon = 1e-12);
}

#[test]
fn cauchy_kernel() {
    assert_eq!(cauchy_weight(0.0, 2.0), 1.0);
    assert!(cauchy_weight(1e9, 2.0) < 1e-16);
    for c in [0.5, 2.0, 7.0] {
        assert!(cauchy_weight(2.0 * c, c) < cauchy_weight(c, c));
    }
    // small residuals behave quadratically
    assert_relative_eq!(cauchy_cost(1e-6, 2.0), 0.5e-6, epsilon = 1e-12);
}

#[test]
fn lidar_residual_is_rigidly_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ext = random_ext(&mut rng);
    let traj = random_traj(&mut rng);
    let (a, b) = traj.domain();
    let f = LidarPlanarFactor {
        point_lidar: vec3(&mut rng, 5.0),
        t: rng.random_range(a..b),
        normal: vec3(&mut rng, 1.0).normalize(),
        d: rng.random_range(-3.0..3.0),
        sigma: 0.05,
    };
    let r0 = f.evaluate(&traj, &ext).unwrap();
    for _ in 0..100 {
        let tq = UnitQuaternion::from_scaled_axis(vec3(&mut rng, 3.0));
        let tp = vec3(&mut rng, 10.0);
        let rots = traj.rotations().iter().map(|q| tq * q).collect();
        let pos = traj.positions().iter().map(|p| tq * p + tp).collect();
        let moved = Trajectory::new(traj.knots().clone(), rots, pos).unwrap();
        let n = tq * f.normal;
        let g = LidarPlanarFactor {
            normal: n,
            d: f.d - n.dot(&tp),
            ..f
        };
        assert!((g.evaluate(&moved, &ext).unwrap() - r0).abs() < 1e-9);
    }
}

#[test]
fn jacobians_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let g = Vector3::new(0.0, 0.0, -9.8);
    for _ in 0..60 {
        let traj = random_traj(&mut rng);
        let ext = random_ext(&mut rng);
        let (a, b) = traj.domain();
        let t = rng.random_range(a..b);

        let lf = LidarPlanarFactor {
            point_lidar: vec3(&mut rng, 5.0),
            t,
            normal: vec3(&mut rng, 1.0).normalize(),
            d: 1.0,
            sigma: 0.05,
        };
        let lin = lf.linearize(&traj, &ext).unwrap();
        let num = numeric_cp_jacobian(&traj, lin.first_cp, 1e-6, |tr| SVector::<f64, 1>::new(lf.evaluate(tr, &ext).unwrap()));
        assert!(jacobian_relative_error(&lin, &num, 1e-6) < 1e-5);

        let s = traj.eval_derivatives(t).unwrap();
        let cam_r = s.rotation.matrix() * ext.imu_camera.rotation.to_rotation_matrix().matrix();
        let cam_p = s.rotation.matrix() * ext.imu_camera.translation.vector + s.position;
        let pc = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..8.0));
        let rf = ReprojectionFactor {
            map_point_world: cam_r * pc + cam_p,
            observed_pixel: Vector2::new(40.0, 60.0),
            t,
            intrinsics: intrinsics(),
            sigma: 1.5,
            cauchy_scale: 2.0,
            depth_min: 0.05,
        };
        let lin = rf.linearize(&traj, &ext).unwrap().unwrap();
        let num = numeric_cp_jacobian(&traj, lin.first_cp, 1e-6, |tr| rf.evaluate(tr, &ext).unwrap().unwrap());
        assert!(jacobian_relative_error(&lin, &num, 1e-6) < 1e-5);

        let bias = Bias {
            gyro: vec3(&mut rng, 0.01),
            accel: vec3(&mut rng, 0.1),
        };
        let imf = ImuFactor {
            t,
            gyro_meas: vec3(&mut rng, 1.0),
            accel_meas: vec3(&mut rng, 10.0),
            sigma_g: 1.0,
            sigma_a: 1.0,
        };
        let lin = imf.linearize(&traj, &bias, &g).unwrap();
        assert_relative_eq!(lin.residual, imf.evaluate(&traj, &bias, &g).unwrap(), epsilon = 1e-12);
        let num = numeric_cp_jacobian(&traj, lin.first_cp, 1e-6, |tr| imf.evaluate(tr, &bias, &g).unwrap());
        assert!(jacobian_relative_error(&lin, &num, 1e-6) < 1e-5);
    }
}
