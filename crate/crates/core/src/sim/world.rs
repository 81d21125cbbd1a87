//! Room built from bounded rectangles, with ray casting and landmarks.

use nalgebra::Vector3;

use crate::so3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rectangle {
    pub corner: Vector3<f64>,
    pub edge_u: Vector3<f64>,
    pub edge_v: Vector3<f64>,
}

impl Rectangle {
    pub fn normal(&self) -> Vector3<f64> {
        self.edge_u.cross(&self.edge_v).normalize()
    }

    /// Ray parameter of the hit, if the ray crosses the rectangle ahead.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.normal();
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let s = n.dot(&(self.corner - origin)) / denom;
        if s <= 0.0 {
            return None;
        }
        let rel = origin + dir * s - self.corner;
        let a = rel.dot(&self.edge_u) / self.edge_u.norm_squared();
        let b = rel.dot(&self.edge_v) / self.edge_v.norm_squared();
        ((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b)).then_some(s)
    }
}

/// Planes by index; the first is always the `+x` wall.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneWorld {
    pub planes: Vec<Rectangle>,
}

pub const POSITIVE_X_WALL: usize = 0;

fn rect(corner: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Rectangle {
    Rectangle {
        corner: Vector3::from(corner),
        edge_u: Vector3::from(u),
        edge_v: Vector3::from(v),
    }
}

impl PlaneWorld {
    /// Closed 12 m x 12 m room with a rotated pillar and an inclined board.
    pub fn room() -> Self {
        let (h, lo, hi) = (6.0, -1.2, 2.0);
        let z = hi - lo;
        let mut planes = vec![
            rect([h, -h, lo], [0.0, 2.0 * h, 0.0], [0.0, 0.0, z]),
            rect([-h, -h, lo], [0.0, 0.0, z], [0.0, 2.0 * h, 0.0]),
            rect([-h, h, lo], [2.0 * h, 0.0, 0.0], [0.0, 0.0, z]),
            rect([-h, -h, lo], [0.0, 0.0, z], [2.0 * h, 0.0, 0.0]),
            rect([-h, -h, lo], [2.0 * h, 0.0, 0.0], [0.0, 2.0 * h, 0.0]),
            rect([-h, -h, hi], [0.0, 2.0 * h, 0.0], [2.0 * h, 0.0, 0.0]),
        ];
        // pillar: four faces of a square column rotated by 30 degrees
        let rot = so3::exp(&Vector3::new(0.0, 0.0, 30f64.to_radians()));
        let center = Vector3::new(2.8, 2.4, 0.0);
        let half = 0.35;
        for k in 0..4 {
            let a = rot * so3::exp(&Vector3::new(0.0, 0.0, k as f64 * std::f64::consts::FRAC_PI_2)) * Vector3::new(half, -half, 0.0);
            let b = rot * so3::exp(&Vector3::new(0.0, 0.0, k as f64 * std::f64::consts::FRAC_PI_2)) * Vector3::new(half, half, 0.0);
            let c = center + a + Vector3::new(0.0, 0.0, lo);
            planes.push(Rectangle {
                corner: c,
                edge_u: b - a,
                edge_v: Vector3::new(0.0, 0.0, z),
            });
        }
        // board leaning against the -y wall, 45 degrees
        let s = std::f64::consts::FRAC_1_SQRT_2;
        planes.push(rect([-3.5, -4.0, lo], [2.0, 0.0, 0.0], [0.0, -1.5 * s, 1.5 * s]));
        Self { planes }
    }

    /// Nearest hit `(distance along dir, plane index)` among `allowed` planes.
    pub fn cast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, allowed: Option<usize>) -> Option<(f64, usize)> {
        let mut best: Option<(f64, usize)> = None;
        for (k, p) in self.planes.iter().enumerate() {
            if let Some(s) = p.intersect(origin, dir) {
                if best.is_none_or(|(b, _)| s < b) {
                    best = Some((s, k));
                }
            }
        }
        match (best, allowed) {
            (Some((_, k)), Some(a)) if k != a => None,
            _ => best,
        }
    }

    /// Grid points on every plane, `spacing` apart and inset by half a spacing.
    pub fn landmarks(&self, spacing: f64) -> Vec<(u64, Vector3<f64>)> {
        let mut out = Vec::new();
        for p in &self.planes {
            let (lu, lv) = (p.edge_u.norm(), p.edge_v.norm());
            let (nu, nv) = ((lu / spacing).floor() as usize, (lv / spacing).floor() as usize);
            let (ou, ov) = ((lu - (nu.max(1) - 1) as f64 * spacing) / 2.0, (lv - (nv.max(1) - 1) as f64 * spacing) / 2.0);
            for i in 0..nu.max(1) {
                for j in 0..nv.max(1) {
                    let x = p.corner + p.edge_u / lu * (ou + i as f64 * spacing) + p.edge_v / lv * (ov + j as f64 * spacing);
                    out.push((out.len() as u64, x));
                }
            }
        }
        out
    }
}
