//! Sliding-window estimation: LM solver, marginalization prior and the
//! per-interval odometry pipeline.

pub mod linear;
pub mod lm;
pub mod pipeline;
pub mod prior;
pub mod window;

pub use lm::{solve_lm, NormalEquations, Problem, SolveReport, SolverSettings, Termination};
pub use pipeline::{run_odometry, IntervalLog, Odometry, OutlierTally, PlacementRecord, RunResult, SensorStreams, SHARED_CPS};
pub use prior::{schur_complement, BlockValue, LinPoint, PriorFactor, VarId};
pub use window::{WindowFactors, WindowProblem};
