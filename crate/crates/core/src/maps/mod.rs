//! Local LiDAR map for plane association, global voxel map and the tracked
//! visual point set.

pub mod kdtree;
mod local_map;
mod plane;
pub mod visual;
mod voxel;

pub use kdtree::{brute_force_knn, KdTree};
pub use local_map::{Keyscan, LocalMap};
pub use plane::{fit_plane, Plane};
pub use visual::{
    admit_new_points, associate_frame, evict_by_error, match_frame, AssociationStats, BodyPose, CameraModel, TrackedPoint, TrackedPointSet, VisualParams,
};
pub use voxel::{VoxelKey, VoxelMap};
