//! Exact k-nearest-neighbor search over a static 3-D point set.

use nalgebra::Vector3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    points: Vec<Vector3<f64>>,
    /// Permutation of point indices; leaves own contiguous ranges.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Neighbor index and squared distance.
pub type Neighbor = (usize, f64);

/// Orders by distance, then by insertion index.
fn closer(a: &Neighbor, b: &Neighbor) -> bool {
    a.1 < b.1 || (a.1 == b.1 && a.0 < b.0)
}

fn push_bounded(best: &mut Vec<Neighbor>, cand: Neighbor, k: usize) {
    if best.len() == k && !closer(&cand, best.last().unwrap()) {
        return;
    }
    let pos = best.iter().position(|b| closer(&cand, b)).unwrap_or(best.len());
    best.insert(pos, cand);
    best.truncate(k);
}

impl KdTree {
    pub fn build(points: Vec<Vector3<f64>>) -> Self {
        let mut tree = Self {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        let mid = (start + end) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    /// The `k` nearest points (fewer if the tree is smaller), closest first.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        let mut best = Vec::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, &mut best);
        }
        best
    }

    fn search(&self, node: usize, q: &Vector3<f64>, k: usize, best: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    push_bounded(best, (i, (self.points[i] - q).norm_squared()), k);
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, k, best);
                // equality keeps ties reachable on both sides
                if best.len() < k || diff * diff <= best.last().unwrap().1 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Reference linear scan with the same tie-breaking.
pub fn brute_force_knn(points: &[Vector3<f64>], query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points.iter().enumerate().map(|(i, p)| (i, (p - query).norm_squared())).collect();
    all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}
