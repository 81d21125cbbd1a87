//! Absolute trajectory error with optional rigid alignment.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};

use crate::error::EvalError;

pub type TimedPose = (f64, UnitQuaternion<f64>, Vector3<f64>);

/// Maximum timestamp difference for two poses to be paired.
pub const MATCH_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AteStats {
    pub rmse: f64,
    pub mean: f64,
    pub max: f64,
    pub n_poses: usize,
}

/// Pairs each estimate with the nearest ground-truth pose within tolerance.
/// Both lists must be sorted by time.
pub fn associate(estimated: &[TimedPose], gt: &[TimedPose]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let mut out = Vec::new();
    for (t, _, p) in estimated {
        let idx = gt.partition_point(|g| g.0 < *t);
        let best = [idx.checked_sub(1), Some(idx)]
            .into_iter()
            .flatten()
            .filter(|&i| i < gt.len())
            .min_by(|&a, &b| (gt[a].0 - t).abs().total_cmp(&(gt[b].0 - t).abs()));
        if let Some(i) = best {
            if (gt[i].0 - t).abs() <= MATCH_TOLERANCE {
                out.push((*p, gt[i].2));
            }
        }
    }
    out
}

/// Rotation and translation minimizing `sum |R a + t - b|^2` (scale fixed).
pub fn umeyama(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> (Matrix3<f64>, Vector3<f64>) {
    let n = pairs.len() as f64;
    let ca = pairs.iter().map(|(a, _)| a).sum::<Vector3<f64>>() / n;
    let cb = pairs.iter().map(|(_, b)| b).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for (a, b) in pairs {
        cov += (b - cb) * (a - ca).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("svd u"), svd.v_t.expect("svd v"));
    let mut s = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        s[(2, 2)] = -1.0;
    }
    let r = u * s * vt;
    (r, cb - r * ca)
}

pub fn ate_rmse(estimated: &[TimedPose], gt: &[TimedPose], align: bool) -> Result<AteStats, EvalError> {
    let pairs = associate(estimated, gt);
    if pairs.len() < 2 {
        return Err(EvalError::TooFewPoses(pairs.len()));
    }
    let (r, t) = if align { umeyama(&pairs) } else { (Matrix3::identity(), Vector3::zeros()) };
    let errors: Vec<f64> = pairs.iter().map(|(a, b)| (r * a + t - b).norm()).collect();
    let n = errors.len() as f64;
    Ok(AteStats {
        rmse: (errors.iter().map(|e| e * e).sum::<f64>() / n).sqrt(),
        mean: errors.iter().sum::<f64>() / n,
        max: errors.iter().cloned().fold(0.0, f64::max),
        n_poses: errors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3;

    fn helix(n: usize) -> Vec<TimedPose> {
        (0..n)
            .map(|k| {
                let t = k as f64 * 0.01;
                (t, so3::exp_quat(&Vector3::new(0.0, 0.0, t)), Vector3::new(t.cos(), t.sin(), 0.1 * t))
            })
            .collect()
    }

    #[test]
    fn identical_is_zero() {
        let gt = helix(300);
        assert_eq!(ate_rmse(&gt, &gt, false).unwrap().rmse, 0.0);
    }

    #[test]
    fn constant_offset_with_and_without_alignment() {
        let gt = helix(300);
        let est: Vec<_> = gt.iter().map(|(t, q, p)| (*t, *q, p + Vector3::x())).collect();
        let raw = ate_rmse(&est, &gt, false).unwrap();
        assert!((raw.rmse - 1.0).abs() < 1e-12);
        assert_eq!(raw.n_poses, 300);
        assert!(ate_rmse(&est, &gt, true).unwrap().rmse < 1e-12);
    }

    #[test]
    fn alignment_removes_rotation_and_offset() {
        let gt = helix(500);
        let r = so3::exp(&Vector3::new(0.3, -0.2, 1.1));
        let est: Vec<_> = gt.iter().map(|(t, q, p)| (*t + 4e-4, *q, r * p + Vector3::new(2.0, -1.0, 0.5))).collect();
        assert!(ate_rmse(&est, &gt, true).unwrap().rmse < 1e-12);
        assert!(ate_rmse(&est, &gt, false).unwrap().rmse > 1.0);
    }

    #[test]
    fn unmatched_timestamps_fail() {
        let gt = helix(10);
        let est: Vec<_> = gt.iter().map(|(t, q, p)| (t + 0.005, *q, *p)).collect();
        assert_eq!(ate_rmse(&est, &gt, false), Err(EvalError::TooFewPoses(0)));
    }
}
