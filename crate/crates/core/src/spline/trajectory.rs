use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector4};

use super::blending::{blending_from_knots, cumulative_blending_matrix};
use super::knots::{KnotVector, DEGREE};
use crate::error::SplineError;
use crate::so3;

/// Pose and first/second temporal derivatives at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub rotation: Rotation3<f64>,
    pub position: Vector3<f64>,
    pub angular_velocity_body: Vector3<f64>,
    pub linear_velocity_world: Vector3<f64>,
    pub linear_acceleration_world: Vector3<f64>,
}

/// Anything that can be queried for a pose with derivatives.
///
/// Implemented by the spline [`Trajectory`] and by the simulator's analytic
/// ground truth, so measurement models can be checked against either.
pub trait PoseQuery {
    fn sample(&self, t: f64) -> Result<PoseSample, SplineError>;
}

/// Non-uniform cumulative cubic B-spline on SO(3) x R^3.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    knots: KnotVector,
    rotations: Vec<UnitQuaternion<f64>>,
    positions: Vec<Vector3<f64>>,
    /// Cumulative blending matrix of segment `i`, stored at `i - 3`.
    cumulative: Vec<Matrix4<f64>>,
}

impl Trajectory {
    /// Control point `j` is paired with knot `j`, plus one trailing knot that
    /// closes the last segment, so `knots.len() == rotations.len() + 1`.
    pub fn new(
        knots: KnotVector,
        rotations: Vec<UnitQuaternion<f64>>,
        positions: Vec<Vector3<f64>>,
    ) -> Result<Self, SplineError> {
        if rotations.len() != positions.len() || knots.len() != rotations.len() + 1 {
            return Err(SplineError::CountMismatch {
                knots: knots.len(),
                rotations: rotations.len(),
                positions: positions.len(),
            });
        }
        if rotations.len() < DEGREE + 1 {
            return Err(SplineError::TooFewControlPoints(rotations.len()));
        }
        let mut traj = Self {
            knots,
            rotations,
            positions,
            cumulative: Vec::new(),
        };
        traj.refresh_blending(0);
        Ok(traj)
    }

    /// `k + 1` identical control points whose domain is the single interval
    /// `[t_start, t_start + spacing)`.
    pub fn stationary(
        t_start: f64,
        spacing: f64,
        rotation: UnitQuaternion<f64>,
        position: Vector3<f64>,
    ) -> Self {
        let knots = KnotVector::uniform(t_start - DEGREE as f64 * spacing, spacing, DEGREE + 2);
        Self::new(knots, vec![rotation; DEGREE + 1], vec![position; DEGREE + 1])
            .expect("stationary trajectory is well formed")
    }

    fn refresh_blending(&mut self, first_segment: usize) {
        let n_segments = self.knots.len() - 1 - DEGREE;
        let first = first_segment.max(DEGREE);
        self.cumulative.truncate(first - DEGREE);
        for i in first..DEGREE + n_segments {
            let m = blending_from_knots(&self.knots.segment_knots_padded(i));
            self.cumulative.push(cumulative_blending_matrix(&m));
        }
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn rotations(&self) -> &[UnitQuaternion<f64>] {
        &self.rotations
    }

    pub fn positions(&self) -> &[Vector3<f64>] {
        &self.positions
    }

    pub fn num_control_points(&self) -> usize {
        self.rotations.len()
    }

    pub fn domain(&self) -> (f64, f64) {
        self.knots.domain()
    }

    pub fn set_control_point(&mut self, index: usize, rotation: UnitQuaternion<f64>, position: Vector3<f64>) {
        self.rotations[index] = rotation;
        self.positions[index] = position;
    }

    pub fn cumulative_blending(&self, segment: usize) -> &Matrix4<f64> {
        &self.cumulative[segment - DEGREE]
    }

    /// Appends knots with their control points. Segments whose basis reached
    /// into the extrapolated look-ahead knots are recomputed; all others are
    /// left untouched.
    pub fn extend(
        &mut self,
        new_knots: &[f64],
        new_rotations: &[UnitQuaternion<f64>],
        new_positions: &[Vector3<f64>],
    ) -> Result<(), SplineError> {
        if new_knots.len() != new_rotations.len() || new_knots.len() != new_positions.len() {
            return Err(SplineError::CountMismatch {
                knots: new_knots.len(),
                rotations: new_rotations.len(),
                positions: new_positions.len(),
            });
        }
        let old_len = self.knots.len();
        self.knots.append(new_knots)?;
        self.rotations.extend_from_slice(new_rotations);
        self.positions.extend_from_slice(new_positions);
        // segment i reads knot i + 3; the first one touching padding had i + 3 >= old_len
        self.refresh_blending(old_len.saturating_sub(DEGREE));
        Ok(())
    }

    /// Sets the knots assumed past the end (extrapolated from the last
    /// spacing by default) and refreshes the segments that read them.
    pub fn set_lookahead_knots(&mut self, future: &[f64]) -> Result<(), SplineError> {
        self.knots.set_lookahead(future)?;
        self.refresh_blending(self.knots.len().saturating_sub(DEGREE));
        Ok(())
    }

    /// Segment data for evaluation at `t`.
    pub fn segment_at(&self, t: f64) -> Result<SegmentRef<'_>, SplineError> {
        let i = self.knots.segment_lookup(t)?;
        let t_i = self.knots.as_slice()[i];
        let span = self.knots.as_slice()[i + 1] - t_i;
        Ok(SegmentRef {
            segment: i,
            u: (t - t_i) / span,
            span,
            cumulative: &self.cumulative[i - DEGREE],
            rotations: &self.rotations[i - DEGREE..=i],
            positions: &self.positions[i - DEGREE..=i],
        })
    }

    pub fn eval_pose(&self, t: f64) -> Result<(Rotation3<f64>, Vector3<f64>), SplineError> {
        let eval = SegmentEval::new(&self.segment_at(t)?, false);
        Ok((Rotation3::from_matrix_unchecked(eval.rotation), eval.position))
    }

    pub fn eval_derivatives(&self, t: f64) -> Result<PoseSample, SplineError> {
        let eval = SegmentEval::new(&self.segment_at(t)?, true);
        Ok(eval.to_sample(t))
    }

    /// Pose at `t` clamped into the domain (the open end maps to the last
    /// representable time).
    pub fn eval_pose_clamped(&self, t: f64) -> (Rotation3<f64>, Vector3<f64>) {
        let (start, end) = self.domain();
        let tc = if t < start {
            start
        } else if t >= end {
            // largest value strictly below `end`
            f64::from_bits(end.to_bits() - 1).max(start)
        } else {
            t
        };
        self.eval_pose(tc).expect("clamped time lies in the domain")
    }
}

impl PoseQuery for Trajectory {
    fn sample(&self, t: f64) -> Result<PoseSample, SplineError> {
        self.eval_derivatives(t)
    }
}

/// Borrowed view of the four control points and basis of one segment.
#[derive(Debug, Clone, Copy)]
pub struct SegmentRef<'a> {
    pub segment: usize,
    pub u: f64,
    pub span: f64,
    pub cumulative: &'a Matrix4<f64>,
    pub rotations: &'a [UnitQuaternion<f64>],
    pub positions: &'a [Vector3<f64>],
}

impl SegmentRef<'_> {
    /// Global index of the first (oldest) control point of the segment.
    pub fn first_control_point(&self) -> usize {
        self.segment - DEGREE
    }
}

/// Evaluated segment: pose, derivatives and the intermediate quantities the
/// Jacobians need.
#[derive(Debug, Clone)]
pub struct SegmentEval {
    /// Cumulative basis values, `lambda[0] == 1`.
    pub lambda: [f64; 4],
    pub dlambda: [f64; 4],
    pub ddlambda: [f64; 4],
    /// `d_j = Log(R_{j-1}^T R_j)` for j = 1..=3 (index 0 unused).
    pub deltas: [Vector3<f64>; 4],
    /// `A_j = Exp(lambda_j d_j)` (index 0 unused).
    pub increments: [Matrix3<f64>; 4],
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
    pub omega: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    /// Partial angular velocities of the cumulative recurrence, `omega_j`.
    partial_omega: [Vector3<f64>; 4],
}

impl SegmentEval {
    pub fn new(seg: &SegmentRef<'_>, derivatives: bool) -> Self {
        let u = seg.u;
        let m = seg.cumulative;
        let lam = m * Vector4::new(1.0, u, u * u, u * u * u);
        let inv = 1.0 / seg.span;
        let dlam = m * Vector4::new(0.0, 1.0, 2.0 * u, 3.0 * u * u) * inv;
        let ddlam = m * Vector4::new(0.0, 0.0, 2.0, 6.0 * u) * (inv * inv);
        let lambda = [lam[0], lam[1], lam[2], lam[3]];
        let dlambda = [0.0, dlam[1], dlam[2], dlam[3]];
        let ddlambda = [0.0, ddlam[1], ddlam[2], ddlam[3]];

        let mut deltas = [Vector3::zeros(); 4];
        let mut increments = [Matrix3::identity(); 4];
        let mut rotation = seg.rotations[0].to_rotation_matrix().into_inner();
        for j in 1..4 {
            deltas[j] = so3::log_quat(&(seg.rotations[j - 1].inverse() * seg.rotations[j]));
            increments[j] = so3::exp(&(deltas[j] * lambda[j]));
            rotation *= increments[j];
        }

        let p = seg.positions;
        let mut position = p[0];
        let mut velocity = Vector3::zeros();
        let mut acceleration = Vector3::zeros();
        for j in 1..4 {
            let diff = p[j] - p[j - 1];
            position += diff * lambda[j];
            velocity += diff * dlambda[j];
            acceleration += diff * ddlambda[j];
        }

        let mut omega = Vector3::zeros();
        let mut partial_omega = [Vector3::zeros(); 4];
        if derivatives {
            // Rdot = R_0 (A1' A2 A3 + A1 A2' A3 + A1 A2 A3'), A_j' = A_j [dlambda_j d_j]x
            let r0 = seg.rotations[0].to_rotation_matrix().into_inner();
            let a = &increments;
            let da: Vec<Matrix3<f64>> = (1..4)
                .map(|j| a[j] * so3::hat(&(deltas[j] * dlambda[j])))
                .collect();
            let r_dot = r0 * (da[0] * a[2] * a[3] + a[1] * da[1] * a[3] + a[1] * a[2] * da[2]);
            omega = so3::vee(&(rotation.transpose() * r_dot));

            for j in 1..4 {
                partial_omega[j] = a[j].transpose() * partial_omega[j - 1] + deltas[j] * dlambda[j];
            }
        }

        Self {
            lambda,
            dlambda,
            ddlambda,
            deltas,
            increments,
            rotation,
            position,
            omega,
            velocity,
            acceleration,
            partial_omega,
        }
    }

    pub fn to_sample(&self, t: f64) -> PoseSample {
        PoseSample {
            t,
            rotation: Rotation3::from_matrix_unchecked(self.rotation),
            position: self.position,
            angular_velocity_body: self.omega,
            linear_velocity_world: self.velocity,
            linear_acceleration_world: self.acceleration,
        }
    }

    /// Angular velocity from the cumulative recurrence
    /// `omega_j = A_j^T omega_{j-1} + dlambda_j d_j`; equals `omega`.
    pub fn omega_recurrence(&self) -> Vector3<f64> {
        self.partial_omega[3]
    }

    /// Weights of each control point in `p(t)`, `v(t)` and `a(t)`.
    pub fn position_weights(&self) -> ([f64; 4], [f64; 4], [f64; 4]) {
        let diff = |l: &[f64; 4]| {
            let next = |j: usize| if j < 3 { l[j + 1] } else { 0.0 };
            [l[0] - next(0), l[1] - next(1), l[2] - next(2), l[3]]
        };
        (diff(&self.lambda), diff(&self.dlambda), diff(&self.ddlambda))
    }

    /// `suffix[j] = A_{j+1} ... A_3`, the increments after `j`.
    fn suffix_products(&self) -> [Matrix3<f64>; 4] {
        let a = &self.increments;
        let p3 = Matrix3::identity();
        let p2 = a[3];
        let p1 = a[2] * p2;
        let p0 = a[1] * p1;
        [p0, p1, p2, p3]
    }

    /// Chains `dX/dd_j` (j = 1..=3) into `dX/dphi_m` (m = 0..=3) where
    /// `phi_m` right-perturbs the m-th rotation control point.
    fn chain_to_control_points(&self, wrt_delta: &[Matrix3<f64>; 4]) -> [Matrix3<f64>; 4] {
        let mut out = [Matrix3::zeros(); 4];
        for j in 1..4 {
            let d = &self.deltas[j];
            // d_j depends on R_{j-1} (negatively, through Jl^{-1}) and R_j (through Jr^{-1})
            out[j] += wrt_delta[j] * so3::right_jacobian_inv(d);
            out[j - 1] -= wrt_delta[j] * so3::left_jacobian_inv(d);
        }
        out
    }

    /// `d theta / d phi_m` where `R(t) <- R(t) Exp(theta)`.
    pub fn rotation_jacobians(&self) -> [Matrix3<f64>; 4] {
        let suffix = self.suffix_products();
        let mut wrt_delta = [Matrix3::zeros(); 4];
        for j in 1..4 {
            let l = self.lambda[j];
            wrt_delta[j] = suffix[j].transpose() * so3::right_jacobian(&(self.deltas[j] * l)) * l;
        }
        let mut out = self.chain_to_control_points(&wrt_delta);
        out[0] += suffix[0].transpose();
        out
    }

    /// `d omega / d phi_m` for the body angular velocity.
    pub fn omega_jacobians(&self) -> [Matrix3<f64>; 4] {
        let suffix = self.suffix_products();
        let mut wrt_delta = [Matrix3::zeros(); 4];
        for j in 1..4 {
            let l = self.lambda[j];
            let d = &self.deltas[j];
            let local = self.increments[j].transpose()
                * so3::hat(&self.partial_omega[j - 1])
                * so3::right_jacobian(&(-d * l))
                * l
                + Matrix3::identity() * self.dlambda[j];
            wrt_delta[j] = suffix[j].transpose() * local;
        }
        self.chain_to_control_points(&wrt_delta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Textbook recursive Cox–de Boor evaluation of `N_{j,3}(t)` on the padded knots.
    fn basis_direct(knots: &[f64], j: usize, p: usize, t: f64) -> f64 {
        if p == 0 {
            return if knots[j] <= t && t < knots[j + 1] { 1.0 } else { 0.0 };
        }
        let mut v = 0.0;
        let d1 = knots[j + p] - knots[j];
        if d1 > 0.0 {
            v += (t - knots[j]) / d1 * basis_direct(knots, j, p - 1, t);
        }
        let d2 = knots[j + p + 1] - knots[j + 1];
        if d2 > 0.0 {
            v += (knots[j + p + 1] - t) / d2 * basis_direct(knots, j + 1, p - 1, t);
        }
        v
    }

    /// Pose from the direct basis values; control point `c` owns the basis
    /// supported on `[t[c], t[c+4])`.
    fn eval_direct(traj: &Trajectory, t: f64) -> (Matrix3<f64>, Vector3<f64>) {
        let i = traj.knots().segment_lookup(t).unwrap();
        let padded: Vec<f64> = (0..traj.knots().len() + 3).map(|k| traj.knots().knot_padded(k)).collect();
        let n: Vec<f64> = (i - 3..=i).map(|c| basis_direct(&padded, c, 3, t)).collect();
        let pos: Vector3<f64> = (0..4).map(|b| traj.positions()[i - 3 + b] * n[b]).sum();
        let mut rot = traj.rotations()[i - 3].to_rotation_matrix().into_inner();
        for b in 1..4 {
            let lam: f64 = n[b..].iter().sum();
            let d = so3::log_quat(&(traj.rotations()[i + b - 4].inverse() * traj.rotations()[i - 3 + b]));
            rot *= so3::exp(&(d * lam));
        }
        (rot, pos)
    }

    fn random_trajectory(rng: &mut ChaCha8Rng, n_cp: usize) -> Trajectory {
        let mut t = 0.0;
        let knots: Vec<f64> = (0..=n_cp)
            .map(|_| {
                t += rng.random_range(0.02..0.2);
                t
            })
            .collect();
        let mut q = UnitQuaternion::identity();
        let mut rots = Vec::new();
        let mut pos = Vec::new();
        for _ in 0..n_cp {
            let v = Vector3::new(rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4), rng.random_range(-0.4..0.4));
            q *= UnitQuaternion::from_scaled_axis(v);
            rots.push(q);
            pos.push(Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        Trajectory::new(KnotVector::new(knots).unwrap(), rots, pos).unwrap()
    }

    #[test]
    fn constant_spline_is_static() {
        let q = UnitQuaternion::from_scaled_axis(Vector3::new(0.3, -0.1, 0.7));
        let p = Vector3::new(1.0, 2.0, 3.0);
        let traj = Trajectory::stationary(0.0, 0.1, q, p);
        let s = traj.eval_derivatives(0.05).unwrap();
        assert_relative_eq!(s.rotation.into_inner(), q.to_rotation_matrix().into_inner(), epsilon = 1e-14);
        assert_relative_eq!(s.position, p, epsilon = 1e-14);
        assert!(s.angular_velocity_body.norm() < 1e-14);
        assert!(s.linear_velocity_world.norm() < 1e-14);
        assert!(s.linear_acceleration_world.norm() < 1e-14);
    }

    #[test]
    fn matches_direct_basis_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let traj = random_trajectory(&mut rng, 9);
            let (a, b) = traj.domain();
            for _ in 0..10 {
                let t = rng.random_range(a..b);
                let (r, p) = traj.eval_pose(t).unwrap();
                let (r2, p2) = eval_direct(&traj, t);
                assert_relative_eq!(r.into_inner(), r2, epsilon = 1e-10);
                assert_relative_eq!(p, p2, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn constant_rate_screw() {
        let tau = 0.1;
        let theta = 0.05;
        let rots = (0..8).map(|i| UnitQuaternion::from_scaled_axis(Vector3::z() * (theta * i as f64))).collect();
        let pos = (0..8).map(|i| Vector3::new(0.2 * i as f64, 0.0, 0.0)).collect();
        let traj = Trajectory::new(KnotVector::uniform(0.0, tau, 9), rots, pos).unwrap();
        let s = traj.eval_derivatives(0.55).unwrap();
        assert_relative_eq!(s.angular_velocity_body, Vector3::new(0.0, 0.0, theta / tau), epsilon = 1e-10);
        assert_relative_eq!(s.linear_velocity_world, Vector3::new(0.2 / tau, 0.0, 0.0), epsilon = 1e-10);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = 1e-5;
        for _ in 0..100 {
            let traj = random_trajectory(&mut rng, 8);
            let i = rng.random_range(3..traj.knots().len() - 1);
            let k = traj.knots().as_slice();
            // stay away from knots so the FD stencil does not straddle one
            let t = k[i] + (k[i + 1] - k[i]) * rng.random_range(0.1..0.9);
            let s = traj.eval_derivatives(t).unwrap();
            let (rp, pp) = traj.eval_pose(t + h).unwrap();
            let (rm, pm) = traj.eval_pose(t - h).unwrap();
            let omega_fd = so3::log(&(rm.transpose() * rp).into_inner()) / (2.0 * h);
            let v_fd = (pp - pm) / (2.0 * h);
            let a_fd = (pp - 2.0 * s.position + pm) / (h * h);
            assert!((omega_fd - s.angular_velocity_body).norm() <= 1e-6 * s.angular_velocity_body.norm().max(1.0));
            assert!((v_fd - s.linear_velocity_world).norm() <= 1e-6 * s.linear_velocity_world.norm().max(1.0));
            assert!((a_fd - s.linear_acceleration_world).norm() <= 1e-3 * s.linear_acceleration_world.norm().max(1.0));
            let seg = SegmentEval::new(&traj.segment_at(t).unwrap(), true);
            assert_relative_eq!(seg.omega_recurrence(), seg.omega, epsilon = 1e-10);
        }
    }

    #[test]
    fn continuity_across_knots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let traj = random_trajectory(&mut rng, 10);
        let eps = 1e-7;
        for &k in &traj.knots().as_slice()[4..traj.knots().len() - 1] {
            let a = traj.eval_derivatives(k - eps).unwrap();
            let b = traj.eval_derivatives(k + eps).unwrap();
            assert!((a.position - b.position).norm() < 1e-5 * 1e-2 + 1e-8 * 1e3);
            assert!((a.linear_velocity_world - b.linear_velocity_world).norm() < 1e-4);
            assert!(so3::angle_between(&a.rotation.into_inner(), &b.rotation.into_inner()) < 1e-5);
            assert!((a.angular_velocity_body - b.angular_velocity_body).norm() < 1e-4);
        }
    }

    #[test]
    fn extend_preserves_early_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut traj = random_trajectory(&mut rng, 8);
        let before = traj.clone();
        let (_, end) = traj.domain();
        let q = *traj.rotations().last().unwrap();
        let p = *traj.positions().last().unwrap();
        let new_knots: Vec<f64> = (1..=4).map(|j| end + 0.025 * j as f64).collect();
        traj.extend(&new_knots, &[q; 4], &[p; 4]).unwrap();
        assert_eq!(traj.domain().1, end + 0.1);
        // segments that do not read the padded knots are bit-identical
        let k = before.knots().as_slice();
        let n = k.len();
        for i in 3..n - 3 {
            let t = 0.5 * (k[i] + k[i + 1]);
            assert_eq!(traj.eval_pose(t).unwrap(), before.eval_pose(t).unwrap());
        }
        assert!(traj.extend(&[end], &[q], &[p]).is_err());
    }

    #[test]
    fn matching_lookahead_makes_extension_invisible() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mut traj = random_trajectory(&mut rng, 8);
        let (start, end) = traj.domain();
        traj.set_lookahead_knots(&[end + 0.02, end + 0.07]).unwrap();
        for j in 0..40 {
            let t = start + (end - start) * (j as f64 + 0.5) / 40.0;
            let (r, p) = eval_direct(&traj, t);
            let (r_fast, p_fast) = traj.eval_pose(t).unwrap();
            assert_relative_eq!(r_fast.into_inner(), r, epsilon = 1e-12);
            assert_relative_eq!(p_fast, p, epsilon = 1e-12);
        }
        let before = traj.clone();
        let q = *traj.rotations().last().unwrap();
        let p = *traj.positions().last().unwrap();
        traj.extend(&[end + 0.02], &[q], &[p]).unwrap();
        assert!(traj.knots().lookahead().is_empty());
        traj.set_lookahead_knots(&[end + 0.07]).unwrap();
        for j in 0..40 {
            let t = start + (end - start) * (j as f64 + 0.5) / 40.0;
            let (r0, p0) = before.eval_pose(t).unwrap();
            let (r1, p1) = traj.eval_pose(t).unwrap();
            assert_relative_eq!(r0.into_inner(), r1.into_inner(), epsilon = 1e-12);
            assert_relative_eq!(p0, p1, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_and_omega_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-6;
        for _ in 0..50 {
            let traj = random_trajectory(&mut rng, 7);
            let (a, b) = traj.domain();
            let t = rng.random_range(a..b);
            let seg = traj.segment_at(t).unwrap();
            let first = seg.first_control_point();
            let eval = SegmentEval::new(&seg, true);
            let jr = eval.rotation_jacobians();
            let jw = eval.omega_jacobians();
            for m in 0..4 {
                for c in 0..3 {
                    let mut e = Vector3::zeros();
                    e[c] = h;
                    let perturbed = |sign: f64| {
                        let mut tr = traj.clone();
                        let q = traj.rotations()[first + m] * so3::exp_quat(&(e * sign));
                        tr.set_control_point(first + m, q, traj.positions()[first + m]);
                        SegmentEval::new(&tr.segment_at(t).unwrap(), true)
                    };
                    let (pl, mi) = (perturbed(1.0), perturbed(-1.0));
                    let dtheta = so3::log(&(mi.rotation.transpose() * pl.rotation)) / (2.0 * h);
                    let dw = (pl.omega - mi.omega) / (2.0 * h);
                    assert_relative_eq!(dtheta, jr[m].column(c).into_owned(), epsilon = 1e-6);
                    assert_relative_eq!(dw, jw[m].column(c).into_owned(), epsilon = 1e-5 * (1.0 + dw.norm()));
                }
            }
        }
    }
}
