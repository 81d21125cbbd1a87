//! Deterministic synthetic world, ground-truth motion and sensor streams.

pub mod ate;
pub mod bundle;
pub mod generate;
pub mod motion;
pub mod world;

pub use ate::{ate_rmse, AteStats, TimedPose};
pub use bundle::{read_bundle, write_bundle};
pub use generate::{gen_camera_frame, gen_imu, gen_lidar_scan, ground_truth, ideal_imu, simulate, ImuNoise, LidarPattern, PixelNoise, SimBundle};
pub use motion::{GroundTruth, Regime, Term, STATIC_PREFIX};
pub use world::{PlaneWorld, Rectangle, POSITIVE_X_WALL};
