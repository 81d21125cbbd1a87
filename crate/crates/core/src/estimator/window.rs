//! Least-squares problem over the control points and biases of one interval.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector, SMatrix, SVector, UnitQuaternion, Vector3};

use super::lm::{NormalEquations, Problem};
use super::prior::{schur_complement, BlockValue, LinPoint, PriorFactor, VarId};
use crate::error::SolveError;
use crate::factors::{cauchy_cost, cauchy_weight, BiasFactor, ImuFactor, LidarPlanarFactor, Linearized, ReprojectionFactor};
use crate::sensors::{Bias, Extrinsics};
use crate::so3;
use crate::spline::{Trajectory, DEGREE};

/// Measurement factors of one interval.
#[derive(Debug, Clone, Default)]
pub struct WindowFactors {
    pub imu: Vec<ImuFactor>,
    pub lidar: Vec<LidarPlanarFactor>,
    pub visual: Vec<ReprojectionFactor>,
    pub bias: Option<BiasFactor>,
}

/// Control points `first_cp .. first_cp + n_cps` plus the bias states of the
/// previous and current interval.
pub struct WindowProblem<'a> {
    pub traj: &'a mut Trajectory,
    pub first_cp: usize,
    pub n_cps: usize,
    pub bias_prev: Bias,
    pub bias_curr: Bias,
    /// When false the biases are held constant (IMU-only bootstrap).
    pub optimize_biases: bool,
    pub factors: &'a WindowFactors,
    pub prior: Option<&'a PriorFactor>,
    pub ext: Extrinsics,
    pub gravity: Vector3<f64>,
    dropped_visual: Cell<usize>,
}

#[derive(Clone)]
pub struct WindowSnapshot {
    rotations: Vec<UnitQuaternion<f64>>,
    positions: Vec<Vector3<f64>>,
    bias_prev: Bias,
    bias_curr: Bias,
}

/// Which bias state a block belongs to.
#[derive(Clone, Copy)]
enum BiasBlock {
    PrevGyro,
    PrevAccel,
    CurrGyro,
    CurrAccel,
}

/// Scatters small dense residual blocks into the normal equations.
struct Accumulator<'n> {
    ne: Option<&'n mut NormalEquations>,
    cost: f64,
}

impl Accumulator<'_> {
    fn add<const M: usize>(&mut self, r: &SVector<f64, M>, blocks: &[(usize, SMatrix<f64, M, 3>)], cost: f64) {
        self.cost += cost;
        let Some(ne) = self.ne.as_deref_mut() else { return };
        for (a, (oa, ja)) in blocks.iter().enumerate() {
            let g = ja.transpose() * r;
            let mut rhs = ne.rhs.fixed_rows_mut::<3>(*oa);
            rhs -= g;
            for (ob, jb) in &blocks[a..] {
                let h = ja.transpose() * jb;
                let mut v = ne.hessian.fixed_view_mut::<3, 3>(*oa, *ob);
                v += h;
                if ob != oa {
                    let mut vt = ne.hessian.fixed_view_mut::<3, 3>(*ob, *oa);
                    vt += h.transpose();
                }
            }
        }
        ne.cost += cost;
    }
}

impl<'a> WindowProblem<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        traj: &'a mut Trajectory,
        first_cp: usize,
        n_cps: usize,
        bias_prev: Bias,
        bias_curr: Bias,
        optimize_biases: bool,
        factors: &'a WindowFactors,
        prior: Option<&'a PriorFactor>,
        ext: Extrinsics,
        gravity: Vector3<f64>,
    ) -> Self {
        assert!(first_cp + n_cps <= traj.num_control_points());
        Self {
            traj,
            first_cp,
            n_cps,
            bias_prev,
            bias_curr,
            optimize_biases,
            factors,
            prior,
            ext,
            gravity,
            dropped_visual: Cell::new(0),
        }
    }

    /// Visual factors skipped at the last evaluation for lying behind the camera.
    pub fn dropped_visual(&self) -> usize {
        self.dropped_visual.get()
    }

    fn bias_offset(&self, b: BiasBlock) -> Option<usize> {
        if !self.optimize_biases {
            return None;
        }
        let base = 6 * self.n_cps;
        Some(
            base + match b {
                BiasBlock::PrevGyro => 0,
                BiasBlock::PrevAccel => 3,
                BiasBlock::CurrGyro => 6,
                BiasBlock::CurrAccel => 9,
            },
        )
    }

    fn local_segment(&self, first_cp: usize) -> Result<usize, SolveError> {
        if first_cp < self.first_cp || first_cp + DEGREE + 1 > self.first_cp + self.n_cps {
            return Err(SolveError::OutsideWindow {
                cp: first_cp,
                first: self.first_cp,
                end: self.first_cp + self.n_cps,
            });
        }
        Ok(first_cp - self.first_cp)
    }

    fn cp_blocks<const M: usize>(&self, lin: &Linearized<M>, scale: &SVector<f64, M>) -> Result<Vec<(usize, SMatrix<f64, M, 3>)>, SolveError> {
        let k0 = self.local_segment(lin.first_cp)?;
        let mut blocks = Vec::with_capacity(10);
        let s = SMatrix::<f64, M, M>::from_diagonal(scale);
        for m in 0..4 {
            blocks.push((6 * (k0 + m), s * lin.rot[m]));
            blocks.push((6 * (k0 + m) + 3, s * lin.pos[m]));
        }
        Ok(blocks)
    }

    fn prior_values(&self, prior: &PriorFactor) -> Result<Vec<(Option<usize>, BlockValue<'_>)>, SolveError> {
        let end = self.first_cp + self.n_cps;
        let check = |g: usize| {
            if g < self.first_cp || g >= end {
                Err(SolveError::OutsideWindow { cp: g, first: self.first_cp, end })
            } else {
                Ok(g - self.first_cp)
            }
        };
        prior
            .blocks
            .iter()
            .map(|(id, _)| {
                Ok(match *id {
                    VarId::RotationCp(g) => (Some(6 * check(g)?), BlockValue::Rotation(&self.traj.rotations()[g])),
                    VarId::PositionCp(g) => (Some(6 * check(g)? + 3), BlockValue::Euclidean(self.traj.positions()[g].as_slice())),
                    VarId::GyroBias => (self.bias_offset(BiasBlock::PrevGyro), BlockValue::Euclidean(self.bias_prev.gyro.as_slice())),
                    VarId::AccelBias => (self.bias_offset(BiasBlock::PrevAccel), BlockValue::Euclidean(self.bias_prev.accel.as_slice())),
                    VarId::Index(_) => panic!("generic block in a window prior"),
                })
            })
            .collect()
    }

    fn accumulate(&self, acc: &mut Accumulator<'_>, jacobians: bool) -> Result<(), SolveError> {
        let traj: &Trajectory = self.traj;
        for f in &self.factors.imu {
            let inv = f.sigmas().map(|s| 1.0 / s);
            if jacobians {
                let lin = f.linearize(traj, &self.bias_curr, &self.gravity)?;
                let r = lin.residual.component_mul(&inv);
                let mut blocks = self.cp_blocks(&lin, &inv)?;
                if let (Some(og), Some(oa)) = (self.bias_offset(BiasBlock::CurrGyro), self.bias_offset(BiasBlock::CurrAccel)) {
                    let mut jg = SMatrix::<f64, 6, 3>::zeros();
                    let mut ja = SMatrix::<f64, 6, 3>::zeros();
                    for k in 0..3 {
                        jg[(k, k)] = inv[k];
                        ja[(k + 3, k)] = inv[k + 3];
                    }
                    blocks.push((og, jg));
                    blocks.push((oa, ja));
                }
                acc.add(&r, &blocks, 0.5 * r.norm_squared());
            } else {
                self.local_segment(traj.segment_at(f.t)?.first_control_point())?;
                let r = f.evaluate(traj, &self.bias_curr, &self.gravity)?.component_mul(&inv);
                acc.cost += 0.5 * r.norm_squared();
            }
        }
        for f in &self.factors.lidar {
            let inv = SVector::<f64, 1>::new(1.0 / f.sigma);
            if jacobians {
                let lin = f.linearize(traj, &self.ext)?;
                let r = lin.residual.component_mul(&inv);
                let blocks = self.cp_blocks(&lin, &inv)?;
                acc.add(&r, &blocks, 0.5 * r.norm_squared());
            } else {
                let r = f.evaluate(traj, &self.ext)? / f.sigma;
                acc.cost += 0.5 * r * r;
            }
        }
        let mut dropped = 0;
        for f in &self.factors.visual {
            let raw = if jacobians {
                f.linearize(traj, &self.ext)?.map(|lin| (lin.residual, Some(lin)))
            } else {
                f.evaluate(traj, &self.ext)?.map(|r| (r, None))
            };
            let Some((r, lin)) = raw else {
                dropped += 1;
                continue;
            };
            let cost = cauchy_cost(r.norm_squared(), f.cauchy_scale) / (f.sigma * f.sigma);
            match lin {
                Some(lin) => {
                    let s = cauchy_weight(r.norm(), f.cauchy_scale).sqrt() / f.sigma;
                    let scale = SVector::<f64, 2>::repeat(s);
                    let blocks = self.cp_blocks(&lin, &scale)?;
                    acc.add(&(r * s), &blocks, cost);
                }
                None => acc.cost += cost,
            }
        }
        self.dropped_visual.set(dropped);
        if let Some(bf) = &self.factors.bias {
            let r = bf.whitened(&self.bias_prev, &self.bias_curr);
            let cost = 0.5 * r.norm_squared();
            match (jacobians, self.bias_offset(BiasBlock::PrevGyro)) {
                (true, Some(_)) => {
                    let inv = bf.sigmas().map(|s| 1.0 / s);
                    let mut blocks = Vec::new();
                    for (k, (prev, curr)) in [(BiasBlock::PrevGyro, BiasBlock::CurrGyro), (BiasBlock::PrevAccel, BiasBlock::CurrAccel)].into_iter().enumerate() {
                        let mut j = SMatrix::<f64, 6, 3>::zeros();
                        for c in 0..3 {
                            j[(3 * k + c, c)] = inv[3 * k + c];
                        }
                        blocks.push((self.bias_offset(prev).unwrap(), -j));
                        blocks.push((self.bias_offset(curr).unwrap(), j));
                    }
                    acc.add(&r, &blocks, cost);
                }
                _ => acc.cost += cost,
            }
        }
        if let Some(prior) = self.prior {
            let vals = self.prior_values(prior)?;
            let values: Vec<BlockValue<'_>> = vals.iter().map(|(_, v)| v.clone()).collect();
            if jacobians {
                let lin = prior.linearize(&values);
                let cost = 0.5 * lin.residual.norm_squared();
                if let Some(ne) = acc.ne.as_deref_mut() {
                    let free: Vec<(usize, &DMatrix<f64>)> = vals.iter().zip(&lin.jacobians).filter_map(|((o, _), j)| o.map(|o| (o, j))).collect();
                    for (a, (oa, ja)) in free.iter().enumerate() {
                        let g = ja.transpose() * &lin.residual;
                        let mut rhs = ne.rhs.rows_mut(*oa, 3);
                        rhs -= g;
                        for (ob, jb) in &free[a..] {
                            let h = ja.transpose() * *jb;
                            let mut v = ne.hessian.view_mut((*oa, *ob), (3, 3));
                            v += &h;
                            if ob != oa {
                                let mut vt = ne.hessian.view_mut((*ob, *oa), (3, 3));
                                vt += h.transpose();
                            }
                        }
                    }
                    ne.cost += cost;
                }
                acc.cost += cost;
            } else {
                acc.cost += prior.cost(&values);
            }
        }
        Ok(())
    }

    /// Prior over the trailing control points and the current biases,
    /// linearized at the current state. Requires free biases.
    pub fn marginalize(&mut self, keep_cps: usize) -> Result<(PriorFactor, f64), SolveError> {
        assert!(self.optimize_biases, "marginalization needs the bias states in the system");
        let ne = self.linearize()?;
        let end = self.first_cp + self.n_cps;
        let mut keep = Vec::new();
        let mut blocks = Vec::new();
        for g in end - keep_cps..end {
            let o = 6 * (g - self.first_cp);
            keep.extend(o..o + 6);
            blocks.push((VarId::RotationCp(g), LinPoint::Rotation(self.traj.rotations()[g])));
            blocks.push((VarId::PositionCp(g), LinPoint::Euclidean(DVector::from_column_slice(self.traj.positions()[g].as_slice()))));
        }
        let og = self.bias_offset(BiasBlock::CurrGyro).unwrap();
        keep.extend(og..og + 6);
        blocks.push((VarId::GyroBias, LinPoint::Euclidean(DVector::from_column_slice(self.bias_curr.gyro.as_slice()))));
        blocks.push((VarId::AccelBias, LinPoint::Euclidean(DVector::from_column_slice(self.bias_curr.accel.as_slice()))));
        let eig = ne.hessian.clone().symmetric_eigen().eigenvalues;
        let (lo, hi) = (eig.min(), eig.max());
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        let m = schur_complement(&ne, &keep);
        Ok((PriorFactor::from_information(blocks, m.information, m.information_vector, m.regularized), condition))
    }
}

impl Problem for WindowProblem<'_> {
    type Snapshot = WindowSnapshot;

    fn dim(&self) -> usize {
        6 * self.n_cps + if self.optimize_biases { 12 } else { 0 }
    }

    fn linearize(&mut self) -> Result<NormalEquations, SolveError> {
        let mut ne = NormalEquations::zeros(self.dim());
        let mut acc = Accumulator { ne: Some(&mut ne), cost: 0.0 };
        self.accumulate(&mut acc, true)?;
        let cost = acc.cost;
        ne.cost = cost;
        if !cost.is_finite() || ne.hessian.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite("window linearization"));
        }
        Ok(ne)
    }

    fn cost(&self) -> Result<f64, SolveError> {
        let mut acc = Accumulator { ne: None, cost: 0.0 };
        self.accumulate(&mut acc, false)?;
        Ok(acc.cost)
    }

    fn retract(&mut self, dx: &DVector<f64>) {
        for k in 0..self.n_cps {
            let g = self.first_cp + k;
            let dr = Vector3::new(dx[6 * k], dx[6 * k + 1], dx[6 * k + 2]);
            let dp = Vector3::new(dx[6 * k + 3], dx[6 * k + 4], dx[6 * k + 5]);
            let q = self.traj.rotations()[g] * so3::exp_quat(&dr);
            let q = UnitQuaternion::new_normalize(q.into_inner());
            let p = self.traj.positions()[g] + dp;
            self.traj.set_control_point(g, q, p);
        }
        if self.optimize_biases {
            let o = 6 * self.n_cps;
            let v = |k: usize| Vector3::new(dx[o + k], dx[o + k + 1], dx[o + k + 2]);
            self.bias_prev.gyro += v(0);
            self.bias_prev.accel += v(3);
            self.bias_curr.gyro += v(6);
            self.bias_curr.accel += v(9);
        }
    }

    fn snapshot(&self) -> WindowSnapshot {
        let r = self.first_cp..self.first_cp + self.n_cps;
        WindowSnapshot {
            rotations: self.traj.rotations()[r.clone()].to_vec(),
            positions: self.traj.positions()[r].to_vec(),
            bias_prev: self.bias_prev,
            bias_curr: self.bias_curr,
        }
    }

    fn restore(&mut self, s: WindowSnapshot) {
        for k in 0..self.n_cps {
            self.traj.set_control_point(self.first_cp + k, s.rotations[k], s.positions[k]);
        }
        self.bias_prev = s.bias_prev;
        self.bias_curr = s.bias_curr;
    }

    fn state_norm(&self) -> f64 {
        let p: f64 = self.traj.positions()[self.first_cp..self.first_cp + self.n_cps].iter().map(|p| p.norm_squared()).sum();
        (p + self.n_cps as f64).sqrt()
    }
}
