//! Per-segment blending matrices of a non-uniform cubic B-spline.
//!
//! `M[b][p]` is the coefficient of `u^p` in the basis function of the `b`-th
//! control point active on the segment (`b = 0` is the oldest). The
//! cumulative form satisfies `lambda(u) = M_cum * [1, u, u^2, u^3]^T` with
//! `lambda_0 = 1`.

use nalgebra::Matrix4;

use super::knots::KnotVector;
use crate::error::SplineError;

/// Cubic polynomial in `u`, lowest power first.
type Poly = [f64; 4];

fn poly_mul_linear(p: &Poly, c0: f64, c1: f64) -> Poly {
    // (c0 + c1 u) * p(u), truncated to degree 3; inputs never exceed degree 2 here.
    let mut out = [0.0; 4];
    for k in 0..4 {
        out[k] += c0 * p[k];
        if k + 1 < 4 {
            out[k + 1] += c1 * p[k];
        }
    }
    out
}

fn poly_add(a: &Poly, b: &Poly) -> Poly {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// Blending matrix from the six knots `t[i-2]..=t[i+3]` of segment `i`.
///
/// Runs the Cox–de Boor recurrence with polynomial coefficients in
/// `u = (t - t[i]) / (t[i+1] - t[i])`. Only knot ratios matter, so the
/// result is invariant to shifting or scaling the knots.
pub fn blending_from_knots(knots: &[f64; 6]) -> Matrix4<f64> {
    // knots[m + 2] = t[i + m] for m in -2..=3
    let t = |m: isize| knots[(m + 2) as usize];
    let t_i = t(0);
    let span = t(1) - t(0);

    // basis[p][r] holds N_{i-p+r, p} for r in 0..=p (r = p is N_{i,p})
    let mut prev: Vec<Poly> = vec![[1.0, 0.0, 0.0, 0.0]];
    for p in 1..=3isize {
        let mut cur = Vec::with_capacity(p as usize + 1);
        for r in 0..=p {
            let j = -p + r; // basis index relative to i
            let mut acc = [0.0; 4];
            // first term uses N_{j, p-1}, nonzero only when j >= -(p-1)
            if j >= -(p - 1) {
                let lower = &prev[(j + p - 1) as usize];
                let denom = t(j + p) - t(j);
                // (t - t_j) / denom with t = t_i + span * u
                acc = poly_add(&acc, &poly_mul_linear(lower, (t_i - t(j)) / denom, span / denom));
            }
            // second term uses N_{j+1, p-1}, nonzero only when j + 1 <= 0
            if j < 0 {
                let lower = &prev[(j + 1 + p - 1) as usize];
                let denom = t(j + p + 1) - t(j + 1);
                acc = poly_add(
                    &acc,
                    &poly_mul_linear(lower, (t(j + p + 1) - t_i) / denom, -span / denom),
                );
            }
            cur.push(acc);
        }
        prev = cur;
    }

    let mut m = Matrix4::zeros();
    for (b, poly) in prev.iter().enumerate() {
        for (p, c) in poly.iter().enumerate() {
            m[(b, p)] = *c;
        }
    }
    m
}

/// Blending matrix of segment `i`; requires the six knots to be stored.
pub fn blending_matrix(knots: &KnotVector, segment: usize) -> Result<Matrix4<f64>, SplineError> {
    Ok(blending_from_knots(&knots.segment_knots(segment)?))
}

/// Row `m` of the result is the sum of rows `m..=3` of `m_blend`.
pub fn cumulative_blending_matrix(m_blend: &Matrix4<f64>) -> Matrix4<f64> {
    let mut out = *m_blend;
    for row in (0..3).rev() {
        for col in 0..4 {
            out[(row, col)] += out[(row + 1, col)];
        }
    }
    out
}

/// The classical uniform cubic matrix in the `[basis][power]` layout.
pub fn uniform_blending() -> Matrix4<f64> {
    Matrix4::new(
        1.0, -3.0, 3.0, -1.0, //
        4.0, 0.0, -6.0, 3.0, //
        1.0, 3.0, 3.0, -3.0, //
        0.0, 0.0, 0.0, 1.0,
    ) / 6.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_knots_reduce_to_classical_matrix() {
        let kv = KnotVector::uniform(0.0, 1.0, 7);
        let m = blending_matrix(&kv, 3).unwrap();
        assert_relative_eq!(m, uniform_blending(), epsilon = 1e-14);
        let scaled = blending_from_knots(&[10.0, 10.25, 10.5, 10.75, 11.0, 11.25]);
        assert_relative_eq!(scaled, uniform_blending(), epsilon = 1e-12);
    }

    #[test]
    fn cumulative_of_zero_is_zero() {
        assert_eq!(cumulative_blending_matrix(&Matrix4::zeros()), Matrix4::zeros());
    }

    #[test]
    fn partition_of_unity_non_uniform() {
        let m = blending_from_knots(&[0.0, 0.1, 0.2, 0.25, 0.3, 0.5]);
        let sum = m.row_sum();
        assert_relative_eq!(sum[0], 1.0, epsilon = 1e-14);
        for p in 1..4 {
            assert!(sum[p].abs() < 1e-12);
        }
        let cum = cumulative_blending_matrix(&m);
        assert_relative_eq!(cum.row(0).into_owned(), nalgebra::RowVector4::new(1.0, 0.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn insufficient_knots() {
        let kv = KnotVector::uniform(0.0, 1.0, 6);
        assert!(matches!(blending_matrix(&kv, 3), Err(SplineError::InsufficientKnots { .. })));
    }
}
