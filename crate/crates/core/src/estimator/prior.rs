//! Gaussian prior from marginalization (Schur complement).

use nalgebra::{DMatrix, DVector, UnitQuaternion};

use super::lm::NormalEquations;
use crate::so3;

/// Identity of a state block that survives into the next window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarId {
    RotationCp(usize),
    PositionCp(usize),
    GyroBias,
    AccelBias,
    /// Generic vector block, used by plain linear problems.
    Index(usize),
}

/// Linearization point of one block.
#[derive(Debug, Clone, PartialEq)]
pub enum LinPoint {
    Rotation(UnitQuaternion<f64>),
    Euclidean(DVector<f64>),
}

impl LinPoint {
    pub fn dim(&self) -> usize {
        match self {
            LinPoint::Rotation(_) => 3,
            LinPoint::Euclidean(v) => v.len(),
        }
    }
}

/// Current value of a block, matching its [`LinPoint`] variant.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue<'a> {
    Rotation(&'a UnitQuaternion<f64>),
    Euclidean(&'a [f64]),
}

/// Prior `0.5 |L dx - e|^2` with `L^T L = information` and `L^T e = information_vector`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorFactor {
    pub blocks: Vec<(VarId, LinPoint)>,
    pub information: DMatrix<f64>,
    pub information_vector: DVector<f64>,
    sqrt_information: DMatrix<f64>,
    offset: DVector<f64>,
    /// Set when the eliminated block needed diagonal regularization.
    pub regularized: bool,
}

/// Residual and per-block Jacobians of the prior.
pub struct PriorLinearization {
    pub residual: DVector<f64>,
    /// Jacobian columns for each block, in block order.
    pub jacobians: Vec<DMatrix<f64>>,
}

impl PriorFactor {
    /// Builds the square-root form of a Gaussian given in information form.
    pub fn from_information(
        blocks: Vec<(VarId, LinPoint)>,
        information: DMatrix<f64>,
        information_vector: DVector<f64>,
        regularized: bool,
    ) -> Self {
        let n = information.nrows();
        assert_eq!(n, blocks.iter().map(|b| b.1.dim()).sum::<usize>());
        let sym = (&information + information.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let max_ev = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let floor = max_ev * 1e-14;
        let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > floor).collect();
        let mut sqrt_information = DMatrix::zeros(kept.len(), n);
        let mut offset = DVector::zeros(kept.len());
        for (row, &k) in kept.iter().enumerate() {
            let s = eig.eigenvalues[k].sqrt();
            let v = eig.eigenvectors.column(k);
            sqrt_information.row_mut(row).copy_from(&(v.transpose() * s));
            offset[row] = v.dot(&information_vector) / s;
        }
        Self {
            blocks,
            information: sym,
            information_vector,
            sqrt_information,
            offset,
            regularized,
        }
    }

    /// Independent Gaussian on each block: `0.5 sum |x_k - mean_k|^2 / sigma_k^2`.
    pub fn diagonal(blocks: Vec<(VarId, LinPoint)>, sigmas: &[f64]) -> Self {
        let n: usize = blocks.iter().map(|b| b.1.dim()).sum();
        let mut info = DMatrix::zeros(n, n);
        let mut o = 0;
        for ((_, lp), s) in blocks.iter().zip(sigmas) {
            for k in 0..lp.dim() {
                info[(o + k, o + k)] = 1.0 / (s * s);
            }
            o += lp.dim();
        }
        Self::from_information(blocks, info, DVector::zeros(n), false)
    }

    pub fn dim(&self) -> usize {
        self.information.nrows()
    }

    pub fn rank(&self) -> usize {
        self.sqrt_information.nrows()
    }

    /// Tangent deviation of each block from its linearization point.
    fn deviation(&self, values: &[BlockValue<'_>]) -> DVector<f64> {
        let mut dx = DVector::zeros(self.dim());
        let mut o = 0;
        for ((_, lp), v) in self.blocks.iter().zip(values) {
            match (lp, v) {
                (LinPoint::Rotation(q0), BlockValue::Rotation(q)) => {
                    dx.fixed_rows_mut::<3>(o).copy_from(&so3::log_quat(&(q0.inverse() * *q)));
                }
                (LinPoint::Euclidean(x0), BlockValue::Euclidean(x)) => {
                    for k in 0..x0.len() {
                        dx[o + k] = x[k] - x0[k];
                    }
                }
                _ => panic!("prior block kind mismatch"),
            }
            o += lp.dim();
        }
        dx
    }

    pub fn residual(&self, values: &[BlockValue<'_>]) -> DVector<f64> {
        &self.sqrt_information * self.deviation(values) - &self.offset
    }

    pub fn cost(&self, values: &[BlockValue<'_>]) -> f64 {
        0.5 * self.residual(values).norm_squared()
    }

    pub fn linearize(&self, values: &[BlockValue<'_>]) -> PriorLinearization {
        let dx = self.deviation(values);
        let residual = &self.sqrt_information * &dx - &self.offset;
        let mut jacobians = Vec::with_capacity(self.blocks.len());
        let mut o = 0;
        for (_, lp) in &self.blocks {
            let d = lp.dim();
            let cols = self.sqrt_information.columns(o, d).into_owned();
            let j = match lp {
                LinPoint::Rotation(_) => {
                    let jinv = so3::right_jacobian_inv(&dx.fixed_rows::<3>(o).into_owned());
                    cols * DMatrix::from_iterator(3, 3, jinv.iter().cloned())
                }
                LinPoint::Euclidean(_) => cols,
            };
            jacobians.push(j);
            o += d;
        }
        PriorLinearization { residual, jacobians }
    }
}

/// Result of eliminating part of a linear system.
#[derive(Debug, Clone)]
pub struct Marginalized {
    pub information: DMatrix<f64>,
    pub information_vector: DVector<f64>,
    pub regularized: bool,
}

/// Schur complement of `ne` onto the `keep` indices. The eliminated block is
/// regularized with `1e-9` on its diagonal if it is not positive definite.
pub fn schur_complement(ne: &NormalEquations, keep: &[usize]) -> Marginalized {
    let n = ne.hessian.nrows();
    let mut is_kept = vec![false; n];
    for &k in keep {
        is_kept[k] = true;
    }
    let marg: Vec<usize> = (0..n).filter(|&k| !is_kept[k]).collect();
    let pick = |rows: &[usize], cols: &[usize]| DMatrix::from_fn(rows.len(), cols.len(), |i, j| ne.hessian[(rows[i], cols[j])]);
    let h_kk = pick(keep, keep);
    let h_km = pick(keep, &marg);
    let h_mm = pick(&marg, &marg);
    let b_k = DVector::from_fn(keep.len(), |i, _| ne.rhs[keep[i]]);
    let b_m = DVector::from_fn(marg.len(), |i, _| ne.rhs[marg[i]]);
    if marg.is_empty() {
        return Marginalized {
            information: h_kk,
            information_vector: b_k,
            regularized: false,
        };
    }
    let mut regularized = false;
    let sym = (&h_mm + h_mm.transpose()) * 0.5;
    let chol = match sym.clone().cholesky() {
        Some(c) => c,
        None => {
            regularized = true;
            let reg = &sym + DMatrix::identity(marg.len(), marg.len()) * 1e-9;
            match reg.clone().cholesky() {
                Some(c) => c,
                None => {
                    // fall back to an eigenvalue floor
                    let mut eig = reg.symmetric_eigen();
                    eig.eigenvalues.iter_mut().for_each(|v| *v = v.max(1e-9));
                    eig.recompose().cholesky().expect("floored matrix is positive definite")
                }
            }
        }
    };
    let x = chol.solve(&h_km.transpose());
    let y = chol.solve(&b_m);
    let info = &h_kk - &h_km * &x;
    Marginalized {
        information: (&info + info.transpose()) * 0.5,
        information_vector: b_k - &h_km * y,
        regularized,
    }
}
