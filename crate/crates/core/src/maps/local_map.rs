use std::collections::VecDeque;

use nalgebra::Vector3;

use super::kdtree::{KdTree, Neighbor};

#[derive(Debug, Clone)]
pub struct Keyscan {
    pub t: f64,
    pub position: Vector3<f64>,
    pub points: Vec<Vector3<f64>>,
}

/// Bounded set of world-frame keyscans with a kNN index over their union.
#[derive(Debug, Clone)]
pub struct LocalMap {
    keyscan_dt: f64,
    keyscan_dist: f64,
    capacity: usize,
    keyscans: VecDeque<Keyscan>,
    index: KdTree,
}

impl LocalMap {
    pub fn new(keyscan_dt: f64, keyscan_dist: f64, capacity: usize) -> Self {
        Self {
            keyscan_dt,
            keyscan_dist,
            capacity,
            keyscans: VecDeque::new(),
            index: KdTree::default(),
        }
    }

    /// Adds a deskewed scan if enough time or distance passed since the last
    /// keyscan. Returns whether it was added.
    pub fn insert_scan(&mut self, points: Vec<Vector3<f64>>, position: Vector3<f64>, t: f64) -> bool {
        if let Some(last) = self.keyscans.back() {
            let elapsed = t - last.t;
            let moved = (position - last.position).norm();
            if elapsed < self.keyscan_dt && moved < self.keyscan_dist {
                return false;
            }
        }
        self.keyscans.push_back(Keyscan { t, position, points });
        while self.keyscans.len() > self.capacity {
            self.keyscans.pop_front();
        }
        self.rebuild();
        true
    }

    fn rebuild(&mut self) {
        let all: Vec<Vector3<f64>> = self.keyscans.iter().flat_map(|k| k.points.iter().cloned()).collect();
        self.index = KdTree::build(all);
    }

    pub fn num_keyscans(&self) -> usize {
        self.keyscans.len()
    }

    pub fn num_points(&self) -> usize {
        self.index.len()
    }

    pub fn keyscans(&self) -> impl Iterator<Item = &Keyscan> {
        self.keyscans.iter()
    }

    /// The `k` nearest stored points, closest first (fewer if the map is smaller).
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<(Vector3<f64>, f64)> {
        self.index
            .knn(query, k)
            .into_iter()
            .map(|(i, d2): Neighbor| (self.index.points()[i], d2))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan(x: f64) -> Vec<Vector3<f64>> {
        vec![Vector3::new(x, 0.0, 0.0), Vector3::new(x, 1.0, 0.0)]
    }

    #[test]
    fn keyscan_rules() {
        let mut m = LocalMap::new(0.3, 0.2, 20);
        assert!(m.insert_scan(scan(0.0), Vector3::zeros(), 0.0));
        assert!(!m.insert_scan(scan(1.0), Vector3::new(0.01, 0.0, 0.0), 0.05));
        assert!(m.insert_scan(scan(2.0), Vector3::new(0.0, 0.0, 0.0), 0.3));
        assert!(m.insert_scan(scan(3.0), Vector3::new(0.25, 0.0, 0.0), 0.35));
        assert_eq!(m.num_keyscans(), 3);
        assert_eq!(m.num_points(), 6);
    }

    #[test]
    fn capacity_evicts_oldest() {
        let mut m = LocalMap::new(0.3, 0.2, 20);
        for k in 0..25 {
            m.insert_scan(scan(k as f64), Vector3::zeros(), k as f64);
        }
        assert_eq!(m.num_keyscans(), 20);
        assert_eq!(m.num_points(), 40);
        assert_eq!(m.keyscans().next().unwrap().t, 5.0);
        assert_eq!(m.knn(&Vector3::zeros(), 1)[0].0, Vector3::new(5.0, 0.0, 0.0));
    }
}
