//! Frame-to-map visual association: tracked LiDAR map points, epipolar
//! RANSAC, reprojection gating and grid-even admission of new points.

use nalgebra::{DMatrix, Isometry3, Matrix3, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::plane::fit_plane;
use super::voxel::VoxelMap;
use crate::config::Config;
use crate::factors::ReprojectionFactor;
use crate::sensors::{CameraFrame, Intrinsics};

/// Camera rigidly mounted on the IMU body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub imu_camera: Isometry3<f64>,
    pub intrinsics: Intrinsics,
}

/// Body pose in the world.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyPose {
    pub rotation: Matrix3<f64>,
    pub position: Vector3<f64>,
}

impl CameraModel {
    pub fn to_camera(&self, pose: &BodyPose, world: &Vector3<f64>) -> Vector3<f64> {
        let body = pose.rotation.transpose() * (world - pose.position);
        self.imu_camera.inverse_transform_point(&body.into()).coords
    }

    /// Pixel and depth of a world point, if in front of the camera.
    pub fn project(&self, pose: &BodyPose, world: &Vector3<f64>, depth_min: f64) -> Option<(Vector2<f64>, f64)> {
        let c = self.to_camera(pose, world);
        (c.z > depth_min).then(|| (self.intrinsics.project(&c), c.z))
    }

    /// Camera center and the world direction of unit depth through `pixel`.
    pub fn ray(&self, pose: &BodyPose, pixel: &Vector2<f64>) -> (Vector3<f64>, Vector3<f64>) {
        let origin = pose.rotation * self.imu_camera.translation.vector + pose.position;
        let dir = pose.rotation * (self.imu_camera.rotation * self.intrinsics.unproject(pixel));
        (origin, dir)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualParams {
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub gate_px: f64,
    pub depth_min: f64,
    pub max_depth: f64,
    pub ransac_iterations: usize,
    pub ransac_threshold_px: f64,
    pub plane_tolerance: f64,
    pub sigma_pixel: f64,
    pub cauchy_scale: f64,
}

impl VisualParams {
    pub fn from_config(c: &Config) -> Self {
        Self {
            grid_cols: c.maps.grid_cols,
            grid_rows: c.maps.grid_rows,
            gate_px: c.maps.gate_px,
            depth_min: c.maps.depth_min,
            max_depth: c.maps.max_depth,
            ransac_iterations: c.maps.ransac_iterations,
            ransac_threshold_px: c.maps.ransac_threshold_px,
            plane_tolerance: c.maps.plane_tolerance,
            sigma_pixel: c.noise.sigma_pixel,
            cauchy_scale: c.noise.cauchy_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackedPoint {
    pub landmark_id: u64,
    pub point: Vector3<f64>,
    pub pixel: Vector2<f64>,
    pub age: usize,
    pub error_px: f64,
    pub depth: f64,
}

/// Map points currently tracked in the image, at most one per grid cell.
#[derive(Debug, Clone, Default)]
pub struct TrackedPointSet {
    entries: Vec<TrackedPoint>,
}

impl TrackedPointSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[TrackedPoint] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: u64) -> bool {
        self.entries.iter().any(|e| e.landmark_id == id)
    }

    pub fn insert(&mut self, entry: TrackedPoint) {
        self.entries.push(entry);
    }

    /// Debug rows `u v x y z err_px age`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("u,v,x,y,z,err_px,age\n");
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.pixel.x, e.pixel.y, e.point.x, e.point.y, e.point.z, e.error_px, e.age
            ));
        }
        s
    }
}

pub fn grid_cell(px: &Vector2<f64>, intr: &Intrinsics, params: &VisualParams) -> usize {
    let c = ((px.x / intr.width) * params.grid_cols as f64).floor().clamp(0.0, params.grid_cols as f64 - 1.0) as usize;
    let r = ((px.y / intr.height) * params.grid_rows as f64).floor().clamp(0.0, params.grid_rows as f64 - 1.0) as usize;
    r * params.grid_cols + c
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationStats {
    pub matched: usize,
    pub lost: usize,
    pub ransac_rejected: usize,
    pub gate_rejected: usize,
    pub grid_rejected: usize,
    pub evicted: usize,
    pub admitted: usize,
    /// Fewer than 8 matches: epipolar check skipped.
    pub ransac_skipped: bool,
    /// Landmarks whose observation in this frame was rejected.
    pub rejected_ids: Vec<u64>,
    /// Landmarks that produced a factor.
    pub factor_ids: Vec<u64>,
}

fn normalize_points(pts: &[Vector2<f64>]) -> (Vec<Vector2<f64>>, Matrix3<f64>) {
    let n = pts.len() as f64;
    let c = pts.iter().sum::<Vector2<f64>>() / n;
    let mean_dist = pts.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean_dist > 1e-12 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    let t = Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0);
    (pts.iter().map(|p| (p - c) * s).collect(), t)
}

/// Normalized eight-point estimate of `F` with `x2^T F x1 = 0`.
pub fn eight_point(x1: &[Vector2<f64>], x2: &[Vector2<f64>]) -> Option<Matrix3<f64>> {
    if x1.len() < 8 || x1.len() != x2.len() {
        return None;
    }
    let (n1, t1) = normalize_points(x1);
    let (n2, t2) = normalize_points(x2);
    let mut a = DMatrix::zeros(x1.len(), 9);
    for (k, (p, q)) in n1.iter().zip(&n2).enumerate() {
        let row = [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0];
        for (c, v) in row.iter().enumerate() {
            a[(k, c)] = *v;
        }
    }
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let f = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let fm = Matrix3::new(f[0], f[1], f[2], f[3], f[4], f[5], f[6], f[7], f[8]);
    let svd = fm.svd(true, true);
    let (u, vt) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    s[2] = 0.0;
    let rank2 = u * Matrix3::from_diagonal(&s) * vt;
    let f = t2.transpose() * rank2 * t1;
    let norm = f.norm();
    (norm > 0.0 && norm.is_finite()).then(|| f / norm)
}

/// First-order geometric (Sampson) distance in pixels.
pub fn sampson_distance(f: &Matrix3<f64>, x1: &Vector2<f64>, x2: &Vector2<f64>) -> f64 {
    let p = Vector3::new(x1.x, x1.y, 1.0);
    let q = Vector3::new(x2.x, x2.y, 1.0);
    let fp = f * p;
    let ftq = f.transpose() * q;
    let num = q.dot(&fp);
    let den = fp.x * fp.x + fp.y * fp.y + ftq.x * ftq.x + ftq.y * ftq.y;
    if den <= 0.0 {
        return f64::INFINITY;
    }
    num.abs() / den.sqrt()
}

/// RANSAC over eight-point fundamental matrices. Returns the inlier mask of
/// the best model, or `None` with fewer than 8 correspondences.
pub fn fundamental_ransac(x1: &[Vector2<f64>], x2: &[Vector2<f64>], iterations: usize, threshold_px: f64, rng: &mut ChaCha8Rng) -> Option<Vec<bool>> {
    let n = x1.len();
    if n < 8 {
        return None;
    }
    let mut best: Option<(usize, Vec<bool>)> = None;
    for _ in 0..iterations.max(1) {
        let idx = sample(rng, n, 8);
        let s1: Vec<_> = idx.iter().map(|i| x1[i]).collect();
        let s2: Vec<_> = idx.iter().map(|i| x2[i]).collect();
        let Some(f) = eight_point(&s1, &s2) else { continue };
        let mask: Vec<bool> = (0..n).map(|i| sampson_distance(&f, &x1[i], &x2[i]) <= threshold_px).collect();
        let count = mask.iter().filter(|&&m| m).count();
        if best.as_ref().is_none_or(|(c, _)| count > *c) {
            best = Some((count, mask));
        }
        if count == n {
            break;
        }
    }
    // refit on the consensus set
    let (_, mask) = best?;
    let in1: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| x1[i]).collect();
    let in2: Vec<_> = (0..n).filter(|&i| mask[i]).map(|i| x2[i]).collect();
    match eight_point(&in1, &in2) {
        Some(f) => {
            let refit: Vec<bool> = (0..n).map(|i| sampson_distance(&f, &x1[i], &x2[i]) <= threshold_px).collect();
            if refit.iter().filter(|&&m| m).count() >= in1.len() {
                return Some(refit);
            }
            Some(mask)
        }
        None => Some(mask),
    }
}

/// Matches tracked points to the frame, rejects epipolar outliers and points
/// beyond the reprojection gate under `pose`, and returns factors for the
/// survivors. Rejected and unobserved points leave the set.
pub fn match_frame(
    tracked: &mut TrackedPointSet,
    frame: &CameraFrame,
    pose: &BodyPose,
    cam: &CameraModel,
    params: &VisualParams,
    seed: u64,
) -> (Vec<ReprojectionFactor>, AssociationStats) {
    let mut stats = AssociationStats::default();
    let mut matched: Vec<(TrackedPoint, Vector2<f64>)> = Vec::new();
    for e in tracked.entries.drain(..) {
        match frame.observations.iter().find(|o| o.landmark_id == e.landmark_id) {
            Some(o) => matched.push((e, o.pixel)),
            None => stats.lost += 1,
        }
    }
    stats.matched = matched.len();

    let prev: Vec<_> = matched.iter().map(|(e, _)| e.pixel).collect();
    let curr: Vec<_> = matched.iter().map(|(_, px)| *px).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ frame.t.to_bits());
    let inliers = fundamental_ransac(&prev, &curr, params.ransac_iterations, params.ransac_threshold_px, &mut rng);
    stats.ransac_skipped = inliers.is_none();

    let mut survivors: Vec<(TrackedPoint, Vector2<f64>)> = Vec::new();
    for (k, (mut e, px)) in matched.into_iter().enumerate() {
        if let Some(mask) = &inliers {
            if !mask[k] {
                stats.ransac_rejected += 1;
                stats.rejected_ids.push(e.landmark_id);
                continue;
            }
        }
        let Some((pred, depth)) = cam.project(pose, &e.point, params.depth_min) else {
            stats.gate_rejected += 1;
            stats.rejected_ids.push(e.landmark_id);
            continue;
        };
        let err = (pred - px).norm();
        if err > params.gate_px {
            stats.gate_rejected += 1;
            stats.rejected_ids.push(e.landmark_id);
            continue;
        }
        e.pixel = px;
        e.error_px = err;
        e.depth = depth;
        e.age += 1;
        survivors.push((e, px));
    }

    // one point per cell, nearest depth wins
    let mut order: Vec<usize> = (0..survivors.len()).collect();
    order.sort_by(|&a, &b| survivors[a].0.depth.total_cmp(&survivors[b].0.depth).then(a.cmp(&b)));
    let mut taken = vec![false; params.grid_cols * params.grid_rows];
    let mut keep = vec![false; survivors.len()];
    for i in order {
        let cell = grid_cell(&survivors[i].1, &cam.intrinsics, params);
        if taken[cell] {
            stats.grid_rejected += 1;
            stats.rejected_ids.push(survivors[i].0.landmark_id);
        } else {
            taken[cell] = true;
            keep[i] = true;
        }
    }
    let mut factors = Vec::new();
    for (i, (e, px)) in survivors.into_iter().enumerate() {
        if !keep[i] {
            continue;
        }
        factors.push(ReprojectionFactor {
            map_point_world: e.point,
            observed_pixel: px,
            t: frame.t,
            intrinsics: cam.intrinsics,
            sigma: params.sigma_pixel,
            cauchy_scale: params.cauchy_scale,
            depth_min: params.depth_min,
        });
        stats.factor_ids.push(e.landmark_id);
        tracked.entries.push(e);
    }
    (factors, stats)
}

/// Removes tracked points whose reprojection error under `pose` exceeds the gate.
pub fn evict_by_error(tracked: &mut TrackedPointSet, pose: &BodyPose, cam: &CameraModel, params: &VisualParams) -> Vec<u64> {
    let mut evicted = Vec::new();
    tracked.entries.retain_mut(|e| match cam.project(pose, &e.point, params.depth_min) {
        Some((px, depth)) if (px - e.pixel).norm() <= params.gate_px => {
            e.error_px = (px - e.pixel).norm();
            e.depth = depth;
            true
        }
        _ => {
            evicted.push(e.landmark_id);
            false
        }
    });
    evicted
}

/// Nearest-depth voxel representative per block of `block` pixels.
struct DepthBuffer {
    cols: usize,
    rows: usize,
    block: f64,
    cells: Vec<Option<(f64, Vector3<f64>)>>,
}

impl DepthBuffer {
    fn build(voxels: &VoxelMap, pose: &BodyPose, cam: &CameraModel, params: &VisualParams, block: f64) -> Self {
        let cols = (cam.intrinsics.width / block).ceil() as usize;
        let rows = (cam.intrinsics.height / block).ceil() as usize;
        let mut cells = vec![None; cols * rows];
        for (_, pts) in voxels.iter() {
            let p = pts[0];
            let Some((px, depth)) = cam.project(pose, &p, params.depth_min) else { continue };
            if depth > params.max_depth || !cam.intrinsics.contains(&px) {
                continue;
            }
            let k = (px.y / block) as usize * cols + (px.x / block) as usize;
            let slot: &mut Option<(f64, Vector3<f64>)> = &mut cells[k];
            if slot.is_none_or(|(d, _)| depth < d) {
                *slot = Some((depth, p));
            }
        }
        Self { cols, rows, block, cells }
    }

    fn nearest_around(&self, px: &Vector2<f64>) -> Option<Vector3<f64>> {
        let (c, r) = ((px.x / self.block) as i64, (px.y / self.block) as i64);
        let mut best: Option<(f64, Vector3<f64>)> = None;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (cc, rr) = (c + dc, r + dr);
                if cc < 0 || rr < 0 || cc >= self.cols as i64 || rr >= self.rows as i64 {
                    continue;
                }
                if let Some((d, p)) = self.cells[rr as usize * self.cols + cc as usize] {
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, p));
                    }
                }
            }
        }
        best.map(|(_, p)| p)
    }
}

/// Map point seen through `pixel`: ray intersected with the plane fitted to
/// the voxel-map neighborhood of the nearest projected map point.
fn lift_pixel(voxels: &VoxelMap, buffer: &DepthBuffer, pose: &BodyPose, cam: &CameraModel, px: &Vector2<f64>, params: &VisualParams) -> Option<(Vector3<f64>, f64)> {
    let anchor = buffer.nearest_around(px)?;
    let mut nbrs = voxels.neighborhood(&anchor, 1);
    nbrs.sort_by(|a, b| (a - anchor).norm_squared().total_cmp(&(b - anchor).norm_squared()));
    nbrs.truncate(5);
    if nbrs.len() < 5 {
        return None;
    }
    let plane = fit_plane(&nbrs, params.plane_tolerance)?;
    let (origin, dir) = cam.ray(pose, px);
    let depth = plane.intersect_ray(&origin, &dir)?;
    let point = origin + dir * depth;
    if depth < params.depth_min || depth > params.max_depth || (point - anchor).norm() > 3.0 * voxels.resolution() {
        return None;
    }
    Some((point, depth))
}

/// Admits untracked observations in free grid cells, nearest depth first,
/// and returns the admitted landmark ids.
///
/// With a `previous` frame, a candidate must also be observed there and its
/// lifted point must reproject within `gate_px` of that observation, so a
/// single corrupted pixel cannot start a track.
pub fn admit_new_points(
    tracked: &mut TrackedPointSet,
    voxels: &VoxelMap,
    frame: &CameraFrame,
    pose: &BodyPose,
    previous: Option<(&CameraFrame, &BodyPose)>,
    cam: &CameraModel,
    params: &VisualParams,
) -> Vec<u64> {
    let n_cells = params.grid_cols * params.grid_rows;
    let mut taken = vec![false; n_cells];
    for e in &tracked.entries {
        taken[grid_cell(&e.pixel, &cam.intrinsics, params)] = true;
    }
    if taken.iter().all(|&t| t) || voxels.num_voxels() == 0 {
        return Vec::new();
    }
    let buffer = DepthBuffer::build(voxels, pose, cam, params, 8.0);
    let mut best: Vec<Option<(f64, TrackedPoint)>> = vec![None; n_cells];
    for o in &frame.observations {
        if !cam.intrinsics.contains(&o.pixel) || tracked.contains(o.landmark_id) {
            continue;
        }
        let cell = grid_cell(&o.pixel, &cam.intrinsics, params);
        if taken[cell] {
            continue;
        }
        let Some((point, depth)) = lift_pixel(voxels, &buffer, pose, cam, &o.pixel, params) else { continue };
        if let Some((prev_frame, prev_pose)) = previous {
            let Some(seen) = prev_frame.observations.iter().find(|p| p.landmark_id == o.landmark_id) else { continue };
            match cam.project(prev_pose, &point, params.depth_min) {
                Some((px, _)) if (px - seen.pixel).norm() <= params.gate_px => {}
                _ => continue,
            }
        }
        if best[cell].as_ref().is_none_or(|(d, _)| depth < *d) {
            best[cell] = Some((
                depth,
                TrackedPoint {
                    landmark_id: o.landmark_id,
                    point,
                    pixel: o.pixel,
                    age: 0,
                    error_px: 0.0,
                    depth,
                },
            ));
        }
    }
    let mut admitted = Vec::new();
    for (_, entry) in best.into_iter().flatten() {
        admitted.push(entry.landmark_id);
        tracked.entries.push(entry);
    }
    admitted
}

/// Full association of one frame under a predicted pose: match, epipolar
/// RANSAC, gate, eviction and admission of new points.
pub fn associate_frame(
    tracked: &mut TrackedPointSet,
    voxels: &VoxelMap,
    frame: &CameraFrame,
    pose: &BodyPose,
    previous: Option<(&CameraFrame, &BodyPose)>,
    cam: &CameraModel,
    params: &VisualParams,
    seed: u64,
) -> (Vec<ReprojectionFactor>, AssociationStats) {
    let (factors, mut stats) = match_frame(tracked, frame, pose, cam, params, seed);
    let evicted = evict_by_error(tracked, pose, cam, params);
    stats.evicted = evicted.len();
    stats.admitted = admit_new_points(tracked, voxels, frame, pose, previous, cam, params).len();
    (factors, stats)
}
