//! Dense Levenberg–Marquardt with Marquardt (diagonal) damping.

use nalgebra::{DMatrix, DVector};

use crate::config::SolverSection;
use crate::error::SolveError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub max_iterations: usize,
    pub initial_lambda: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Relative cost decrease below which the solve stops.
    pub cost_tolerance: f64,
    /// Step norm (relative to state scale) below which the solve stops.
    pub step_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self::from_config(&SolverSection::default())
    }
}

impl SolverSettings {
    pub fn from_config(c: &SolverSection) -> Self {
        Self {
            max_iterations: c.max_iterations,
            initial_lambda: c.initial_lambda,
            lambda_up: c.lambda_up,
            lambda_down: c.lambda_down,
            cost_tolerance: c.cost_tolerance,
            step_tolerance: c.step_tolerance,
        }
    }
}

/// Gauss–Newton system `H dx = b` with `H = J^T J`, `b = -J^T r` and the
/// cost `0.5 |r|^2` (robustified where applicable).
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub hessian: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub cost: f64,
}

impl NormalEquations {
    pub fn zeros(dim: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(dim, dim),
            rhs: DVector::zeros(dim),
            cost: 0.0,
        }
    }

    /// Adds a dense whitened residual block `r` with Jacobian `j`.
    pub fn add_dense(&mut self, j: &DMatrix<f64>, r: &DVector<f64>) {
        self.hessian += j.transpose() * j;
        self.rhs -= j.transpose() * r;
        self.cost += 0.5 * r.norm_squared();
    }
}

pub trait Problem {
    type Snapshot;
    fn dim(&self) -> usize;
    /// Linearizes at the current state. Robust weights may be refreshed here.
    fn linearize(&mut self) -> Result<NormalEquations, SolveError>;
    fn cost(&self) -> Result<f64, SolveError>;
    fn retract(&mut self, dx: &DVector<f64>);
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
    /// Scale used by the relative step test.
    fn state_norm(&self) -> f64 {
        1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CostTolerance,
    StepTolerance,
    MaxIterations,
    /// No step could decrease the cost before damping saturated.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Accepted iterations.
    pub iterations: usize,
    /// Costs after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
    pub termination: Termination,
}

const MAX_LAMBDA: f64 = 1e12;

pub fn solve_lm<P: Problem>(problem: &mut P, settings: &SolverSettings) -> Result<SolveReport, SolveError> {
    let mut lin = problem.linearize()?;
    if !lin.cost.is_finite() {
        return Err(SolveError::NonFinite("initial cost"));
    }
    let mut cost = lin.cost;
    let mut history = vec![cost];
    let mut lambda = settings.initial_lambda;
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;
    let dim = problem.dim();
    if dim == 0 {
        return Ok(SolveReport {
            initial_cost: cost,
            final_cost: cost,
            iterations: 0,
            cost_history: history,
            termination: Termination::StepTolerance,
        });
    }

    let mut attempts = 0;
    while iterations < settings.max_iterations {
        attempts += 1;
        if attempts > settings.max_iterations * 4 + 10 {
            termination = Termination::Stalled;
            break;
        }
        let mut damped = lin.hessian.clone();
        for k in 0..dim {
            let d = lin.hessian[(k, k)].max(1e-12);
            damped[(k, k)] += lambda * d;
        }
        let Some(chol) = damped.cholesky() else {
            lambda *= settings.lambda_up;
            if lambda > MAX_LAMBDA {
                return Err(SolveError::Factorization);
            }
            continue;
        };
        let dx = chol.solve(&lin.rhs);
        if dx.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite("step"));
        }
        if dx.norm() <= settings.step_tolerance * (problem.state_norm() + settings.step_tolerance) {
            termination = Termination::StepTolerance;
            break;
        }
        let snapshot = problem.snapshot();
        problem.retract(&dx);
        let new_cost = problem.cost()?;
        if new_cost.is_finite() && new_cost <= cost {
            iterations += 1;
            let decrease = cost - new_cost;
            cost = new_cost;
            history.push(cost);
            lambda = (lambda * settings.lambda_down).max(1e-15);
            if decrease <= settings.cost_tolerance * cost.max(f64::MIN_POSITIVE) {
                termination = Termination::CostTolerance;
                break;
            }
            lin = problem.linearize()?;
            if !lin.cost.is_finite() {
                return Err(SolveError::NonFinite("cost"));
            }
            // re-weighted costs may differ slightly from the evaluated one
            cost = lin.cost;
        } else {
            problem.restore(snapshot);
            lambda *= settings.lambda_up;
            if lambda > MAX_LAMBDA {
                termination = Termination::Stalled;
                break;
            }
        }
    }
    Ok(SolveReport {
        initial_cost: history[0],
        final_cost: cost,
        iterations,
        cost_history: history,
        termination,
    })
}

/// Residuals with a dense Jacobian over a plain vector state.
pub struct VectorProblem<F>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    pub x: DVector<f64>,
    pub f: F,
}

impl<F> Problem for VectorProblem<F>
where
    F: Fn(&DVector<f64>) -> (DVector<f64>, DMatrix<f64>),
{
    type Snapshot = DVector<f64>;

    fn dim(&self) -> usize {
        self.x.len()
    }

    fn linearize(&mut self) -> Result<NormalEquations, SolveError> {
        let (r, j) = (self.f)(&self.x);
        let mut ne = NormalEquations::zeros(self.x.len());
        ne.add_dense(&j, &r);
        Ok(ne)
    }

    fn cost(&self) -> Result<f64, SolveError> {
        Ok(0.5 * (self.f)(&self.x).0.norm_squared())
    }

    fn retract(&mut self, dx: &DVector<f64>) {
        self.x += dx;
    }

    fn snapshot(&self) -> DVector<f64> {
        self.x.clone()
    }

    fn restore(&mut self, s: DVector<f64>) {
        self.x = s;
    }

    fn state_norm(&self) -> f64 {
        self.x.norm()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rosenbrock_converges() {
        let mut p = VectorProblem {
            x: DVector::from_vec(vec![-1.2, 1.0]),
            f: |x: &DVector<f64>| {
                let r = DVector::from_vec(vec![10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]]);
                let j = DMatrix::from_row_slice(2, 2, &[-20.0 * x[0], 10.0, -1.0, 0.0]);
                (r, j)
            },
        };
        let settings = SolverSettings {
            max_iterations: 200,
            ..Default::default()
        };
        let report = solve_lm(&mut p, &settings).unwrap();
        assert!((p.x[0] - 1.0).abs() < 1e-6 && (p.x[1] - 1.0).abs() < 1e-6, "{:?}", p.x);
        assert!(report.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn linear_least_squares_first_step_lands_on_solution() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let b = DVector::from_vec(vec![1.0, 2.9, 5.1, 7.0]);
        let exact = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &b));
        let (a2, b2) = (a.clone(), b.clone());
        let mut p = VectorProblem {
            x: DVector::zeros(2),
            f: move |x: &DVector<f64>| (&a2 * x - &b2, a2.clone()),
        };
        let one = SolverSettings {
            max_iterations: 1,
            ..Default::default()
        };
        let report = solve_lm(&mut p, &one).unwrap();
        assert_eq!(report.iterations, 1);
        assert!((&p.x - &exact).norm() < 1e-3 * exact.norm());
        let report = solve_lm(&mut p, &SolverSettings::default()).unwrap();
        assert!(report.iterations <= 3);
        assert_relative_eq!(p.x, exact, epsilon = 1e-9);
    }

    #[test]
    fn non_finite_aborts() {
        let mut p = VectorProblem {
            x: DVector::zeros(1),
            f: |_: &DVector<f64>| (DVector::from_vec(vec![f64::NAN]), DMatrix::identity(1, 1)),
        };
        assert!(matches!(solve_lm(&mut p, &SolverSettings::default()), Err(SolveError::NonFinite(_))));
    }
}
