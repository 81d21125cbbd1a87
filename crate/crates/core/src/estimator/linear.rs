//! Linear-Gaussian factor graphs over vector blocks, solved with the same
//! LM and marginalization machinery as the odometry window.

use nalgebra::{DMatrix, DVector};

use super::lm::{NormalEquations, Problem};
use super::prior::{schur_complement, BlockValue, LinPoint, PriorFactor, VarId};
use crate::error::SolveError;

/// `sum_k A_k x_{var_k} - b`, unit covariance.
#[derive(Debug, Clone)]
pub struct LinearFactor {
    pub terms: Vec<(usize, DMatrix<f64>)>,
    pub b: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct LinearProblem {
    /// Global variable id of each block.
    pub vars: Vec<usize>,
    pub values: Vec<DVector<f64>>,
    pub factors: Vec<LinearFactor>,
    pub prior: Option<PriorFactor>,
}

impl LinearProblem {
    fn offsets(&self) -> Vec<usize> {
        let mut o = vec![0];
        for v in &self.values {
            o.push(o.last().unwrap() + v.len());
        }
        o
    }

    fn local(&self, var: usize) -> usize {
        self.vars.iter().position(|&v| v == var).expect("variable in problem")
    }

    fn prior_values(&self, prior: &PriorFactor) -> Vec<usize> {
        prior
            .blocks
            .iter()
            .map(|(id, _)| match id {
                VarId::Index(v) => self.local(*v),
                other => panic!("unexpected prior block {other:?}"),
            })
            .collect()
    }

    fn accumulate(&self, ne: &mut NormalEquations) {
        let off = self.offsets();
        let n = *off.last().unwrap();
        for f in &self.factors {
            let mut j = DMatrix::zeros(f.b.len(), n);
            let mut r = -f.b.clone();
            for (var, a) in &f.terms {
                let l = self.local(*var);
                j.view_mut((0, off[l]), (a.nrows(), a.ncols())).copy_from(a);
                r += a * &self.values[l];
            }
            ne.add_dense(&j, &r);
        }
        if let Some(prior) = &self.prior {
            let locals = self.prior_values(prior);
            let vals: Vec<BlockValue<'_>> = locals.iter().map(|&l| BlockValue::Euclidean(self.values[l].as_slice())).collect();
            let lin = prior.linearize(&vals);
            let mut j = DMatrix::zeros(lin.residual.len(), n);
            for (k, &l) in locals.iter().enumerate() {
                j.view_mut((0, off[l]), (lin.residual.len(), self.values[l].len())).copy_from(&lin.jacobians[k]);
            }
            ne.add_dense(&j, &lin.residual);
        }
    }

    pub fn normal_equations(&self) -> NormalEquations {
        let mut ne = NormalEquations::zeros(*self.offsets().last().unwrap());
        self.accumulate(&mut ne);
        ne
    }

    /// Prior on the variables `keep` obtained by eliminating all others.
    pub fn marginalize(&self, keep: &[usize]) -> PriorFactor {
        let off = self.offsets();
        let ne = self.normal_equations();
        let mut idx = Vec::new();
        let mut blocks = Vec::new();
        for &var in keep {
            let l = self.local(var);
            idx.extend(off[l]..off[l + 1]);
            blocks.push((VarId::Index(var), LinPoint::Euclidean(self.values[l].clone())));
        }
        let m = schur_complement(&ne, &idx);
        PriorFactor::from_information(blocks, m.information, m.information_vector, m.regularized)
    }

    pub fn value(&self, var: usize) -> &DVector<f64> {
        &self.values[self.local(var)]
    }
}

impl Problem for LinearProblem {
    type Snapshot = Vec<DVector<f64>>;

    fn dim(&self) -> usize {
        *self.offsets().last().unwrap()
    }

    fn linearize(&mut self) -> Result<NormalEquations, SolveError> {
        Ok(self.normal_equations())
    }

    fn cost(&self) -> Result<f64, SolveError> {
        Ok(self.normal_equations().cost)
    }

    fn retract(&mut self, dx: &DVector<f64>) {
        let off = self.offsets();
        for (l, v) in self.values.iter_mut().enumerate() {
            *v += dx.rows(off[l], v.len());
        }
    }

    fn snapshot(&self) -> Self::Snapshot {
        self.values.clone()
    }

    fn restore(&mut self, s: Self::Snapshot) {
        self.values = s;
    }

    fn state_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum::<f64>().sqrt()
    }
}
