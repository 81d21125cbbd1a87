//! Non-uniform cumulative cubic B-splines on SO(3) x R^3.

mod blending;
pub mod io;
mod knots;
mod trajectory;

pub use blending::{blending_from_knots, blending_matrix, cumulative_blending_matrix, uniform_blending};
pub use knots::{KnotVector, DEGREE};
pub use trajectory::{PoseQuery, PoseSample, SegmentEval, SegmentRef, Trajectory};
