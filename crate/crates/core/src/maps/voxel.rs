use indexmap::IndexMap;
use nalgebra::Vector3;

pub type VoxelKey = [i64; 3];

/// Hashed voxel grid storing up to `cap` points per voxel (first arrivals kept).
#[derive(Debug, Clone)]
pub struct VoxelMap {
    resolution: f64,
    cap: usize,
    voxels: IndexMap<VoxelKey, Vec<Vector3<f64>>>,
}

impl VoxelMap {
    pub fn new(resolution: f64, cap: usize) -> Self {
        Self {
            resolution,
            cap,
            voxels: IndexMap::new(),
        }
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn key(&self, p: &Vector3<f64>) -> VoxelKey {
        [
            (p.x / self.resolution).floor() as i64,
            (p.y / self.resolution).floor() as i64,
            (p.z / self.resolution).floor() as i64,
        ]
    }

    pub fn insert(&mut self, points: &[Vector3<f64>]) {
        for p in points {
            let key = self.key(p);
            let cell = self.voxels.entry(key).or_default();
            if cell.len() < self.cap && !cell.contains(p) {
                cell.push(*p);
            }
        }
    }

    pub fn voxel(&self, key: &VoxelKey) -> Option<&[Vector3<f64>]> {
        self.voxels.get(key).map(|v| v.as_slice())
    }

    pub fn num_voxels(&self) -> usize {
        self.voxels.len()
    }

    pub fn num_points(&self) -> usize {
        self.voxels.values().map(|v| v.len()).sum()
    }

    /// Voxels in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&VoxelKey, &Vec<Vector3<f64>>)> {
        self.voxels.iter()
    }

    /// All points in the `(2r+1)^3` block of voxels around `p`.
    pub fn neighborhood(&self, p: &Vector3<f64>, r: i64) -> Vec<Vector3<f64>> {
        let c = self.key(p);
        let mut out = Vec::new();
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    if let Some(v) = self.voxels.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        out.extend_from_slice(v);
                    }
                }
            }
        }
        out
    }
}
