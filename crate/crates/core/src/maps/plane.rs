use nalgebra::{Matrix3, Vector3};

/// Plane `n^T x + d = 0`. The normal is oriented so that `d <= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub d: f64,
    pub fit_rms: f64,
}

impl Plane {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.d
    }

    /// Ray parameter `s` with `origin + s * dir` on the plane.
    pub fn intersect_ray(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-9 {
            return None;
        }
        Some(-self.distance(origin) / denom)
    }
}

/// Least-squares plane through `points` (centroid + smallest principal
/// direction). Rejects degenerate spreads and fits where any point is farther
/// than `tolerance` from the plane.
pub fn fit_plane(points: &[Vector3<f64>], tolerance: f64) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = cov.symmetric_eigen();
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mid = eig.eigenvalues[idx[1]];
    // collinear or coincident points leave the in-plane spread one-dimensional
    if mid < 1e-6 || mid < 1e-3 * eig.eigenvalues[idx[2]] {
        return None;
    }
    let mut normal: Vector3<f64> = eig.eigenvectors.column(idx[0]).into_owned().normalize();
    if normal.dot(&centroid) < 0.0 {
        normal = -normal;
    }
    let d = -normal.dot(&centroid);
    let mut sq = 0.0;
    for p in points {
        let e = normal.dot(p) + d;
        if e.abs() > tolerance {
            return None;
        }
        sq += e * e;
    }
    Some(Plane {
        normal,
        d,
        fit_rms: (sq / n).sqrt(),
    })
}
