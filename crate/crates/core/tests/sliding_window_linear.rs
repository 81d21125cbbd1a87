use ctodom_core::estimator::linear::{LinearFactor, LinearProblem};
use ctodom_core::estimator::{solve_lm, LinPoint, PriorFactor, SolverSettings, VarId};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Interval k links x_{k-1} and x_k and observes x_k.
fn interval_factors(rng: &mut ChaCha8Rng, k: usize) -> Vec<LinearFactor> {
    let odo = LinearFactor {
        terms: vec![(k - 1, -DMatrix::identity(2, 2) * 2.0), (k, DMatrix::identity(2, 2) * 2.0 + rand_mat(rng, 2, 2) * 0.3)],
        b: rand_vec(rng, 2),
    };
    let meas = LinearFactor {
        terms: vec![(k, rand_mat(rng, 1, 2))],
        b: rand_vec(rng, 1),
    };
    vec![odo, meas]
}

#[test]
fn sliding_window_with_prior_matches_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let initial_prior = PriorFactor::diagonal(vec![(VarId::Index(0), LinPoint::Euclidean(DVector::from_vec(vec![0.3, -0.2])))], &[0.5]);
    let intervals: Vec<Vec<LinearFactor>> = (1..=5).map(|k| interval_factors(&mut rng, k)).collect();
    let settings = SolverSettings::default();
    let mut prior = initial_prior.clone();
    for k in 1..=5 {
        let mut window = LinearProblem {
            vars: vec![k - 1, k],
            values: vec![DVector::zeros(2), DVector::zeros(2)],
            factors: intervals[k - 1].clone(),
            prior: Some(prior.clone()),
        };
        solve_lm(&mut window, &settings).unwrap();

        let mut batch = LinearProblem {
            vars: (0..=k).collect(),
            values: vec![DVector::zeros(2); k + 1],
            factors: intervals[..k].iter().flatten().cloned().collect(),
            prior: Some(initial_prior.clone()),
        };
        let ne = batch.normal_equations();
        let sol = ne.hessian.clone().cholesky().unwrap().solve(&ne.rhs);
        for (l, v) in batch.values.iter_mut().enumerate() {
            *v = sol.rows(2 * l, 2).into_owned();
        }
        for var in [k - 1, k] {
            let diff = (window.value(var) - batch.value(var)).amax();
            assert!(diff < 1e-8, "interval {k} var {var}: {diff}");
        }
        prior = window.marginalize(&[k]);
        let min_ev = prior.information.clone().symmetric_eigen().eigenvalues.min();
        assert!(min_ev >= -1e-10);
    }
}
