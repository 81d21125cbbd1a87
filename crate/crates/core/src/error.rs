use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplineError {
    #[error("time {t} outside evaluation domain [{start}, {end})")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("segment {segment} needs knots t[{first}]..t[{last}], only {available} knots stored")]
    InsufficientKnots {
        segment: usize,
        first: isize,
        last: usize,
        available: usize,
    },
    #[error("knots must be strictly increasing (index {index}: {prev} >= {next})")]
    NonMonotoneKnots { index: usize, prev: f64, next: f64 },
    #[error("control point count mismatch: {knots} knots, {rotations} rotations, {positions} positions")]
    CountMismatch {
        knots: usize,
        rotations: usize,
        positions: usize,
    },
    #[error("a cubic trajectory needs at least 4 control points, got {0}")]
    TooFewControlPoints(usize),
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("non-finite residual or Jacobian in {0}")]
    NonFinite(&'static str),
    #[error("normal equations could not be factorized")]
    Factorization,
    #[error("factor references control point {cp} outside the window [{first}, {end})")]
    OutsideWindow { cp: usize, first: usize, end: usize },
    #[error(transparent)]
    Spline(#[from] SplineError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Format {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl IoError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn format(path: impl AsRef<std::path::Path>, line: usize, message: impl Into<String>) -> Self {
        IoError::Format {
            path: path.as_ref().display().to_string(),
            line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("need at least 2 matched poses, found {0}")]
    TooFewPoses(usize),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("estimator failed at t = {t:.3}: {source}")]
    Solve {
        t: f64,
        #[source]
        source: SolveError,
    },
    #[error("insufficient data: {0}")]
    NoData(String),
}
