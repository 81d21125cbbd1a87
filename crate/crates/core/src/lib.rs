//! Continuous-time LiDAR-inertial-camera odometry on non-uniform cumulative
//! cubic B-splines, plus a deterministic synthetic sensor simulator.

pub mod error;
pub mod so3;
pub mod spline;
pub mod config;
pub mod placement;
pub mod sensors;
pub mod factors;
pub mod estimator;
pub mod maps;
pub mod sim;
