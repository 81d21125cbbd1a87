//! Text serialization of trajectories and dense TUM pose export.

use std::fmt::Write as _;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{KnotVector, PoseQuery, Trajectory};
use crate::error::SplineError;

/// `knots: t0 t1 ...` followed by one `qx qy qz qw px py pz` line per control point.
pub fn to_text(traj: &Trajectory) -> String {
    let mut out = String::from("knots:");
    for k in traj.knots().as_slice() {
        write!(out, " {k}").unwrap();
    }
    out.push('\n');
    for (q, p) in traj.rotations().iter().zip(traj.positions()) {
        let q = q.quaternion();
        writeln!(out, "{} {} {} {} {} {} {}", q.i, q.j, q.k, q.w, p.x, p.y, p.z).unwrap();
    }
    out
}

pub fn from_text(text: &str) -> Result<Trajectory, SplineError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or(SplineError::Parse {
        line: 1,
        message: "empty input".into(),
    })?;
    let knots_str = header.trim().strip_prefix("knots:").ok_or(SplineError::Parse {
        line: 1,
        message: "expected `knots:` header".into(),
    })?;
    let knots = parse_floats(knots_str, 1)?;
    let mut rotations = Vec::new();
    let mut positions = Vec::new();
    for (idx, line) in lines {
        let v = parse_floats(line, idx + 1)?;
        if v.len() != 7 {
            return Err(SplineError::Parse {
                line: idx + 1,
                message: format!("expected 7 values, got {}", v.len()),
            });
        }
        rotations.push(UnitQuaternion::from_quaternion(Quaternion::new(v[3], v[0], v[1], v[2])));
        positions.push(Vector3::new(v[4], v[5], v[6]));
    }
    Trajectory::new(KnotVector::new(knots)?, rotations, positions)
}

fn parse_floats(s: &str, line: usize) -> Result<Vec<f64>, SplineError> {
    s.split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|e| SplineError::Parse {
                line,
                message: format!("{tok:?}: {e}"),
            })
        })
        .collect()
}

/// One `timestamp tx ty tz qx qy qz qw` line.
pub fn tum_line(t: f64, rotation: &UnitQuaternion<f64>, position: &Vector3<f64>) -> String {
    let q = rotation.quaternion();
    format!(
        "{:.6} {} {} {} {} {} {} {}",
        t, position.x, position.y, position.z, q.i, q.j, q.k, q.w
    )
}

/// Samples `[start, end)` at `rate_hz` on the global grid `n / rate_hz`.
pub fn sample_times(start: f64, end: f64, rate_hz: f64) -> Vec<f64> {
    let first = (start * rate_hz - 1e-9).ceil() as i64;
    let mut out = Vec::new();
    let mut n = first;
    loop {
        let t = n as f64 / rate_hz;
        if t >= end {
            break;
        }
        if t >= start {
            out.push(t);
        }
        n += 1;
    }
    out
}

/// Poses of any source on the `rate_hz` grid over `[start, end)`.
pub fn sample_poses(source: &dyn PoseQuery, start: f64, end: f64, rate_hz: f64) -> Vec<(f64, UnitQuaternion<f64>, Vector3<f64>)> {
    sample_times(start, end, rate_hz)
        .into_iter()
        .filter_map(|t| source.sample(t).ok().map(|s| (t, UnitQuaternion::from_rotation_matrix(&s.rotation), s.position)))
        .collect()
}

/// Dense TUM export of any pose source over `[start, end)`.
pub fn to_tum(source: &dyn PoseQuery, start: f64, end: f64, rate_hz: f64) -> String {
    let mut out = String::new();
    for (t, q, p) in sample_poses(source, start, end, rate_hz) {
        out.push_str(&tum_line(t, &q, &p));
        out.push('\n');
    }
    out
}

/// Parses TUM lines into `(t, rotation, position)`; `#` comments are skipped.
pub fn parse_tum(text: &str) -> Result<Vec<(f64, UnitQuaternion<f64>, Vector3<f64>)>, SplineError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_floats(line, idx + 1)?;
        if v.len() != 8 {
            return Err(SplineError::Parse {
                line: idx + 1,
                message: format!("expected 8 values, got {}", v.len()),
            });
        }
        let q = UnitQuaternion::from_quaternion(Quaternion::new(v[7], v[4], v[5], v[6]));
        out.push((v[0], q, Vector3::new(v[1], v[2], v[3])));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_roundtrip_is_exact() {
        let knots = KnotVector::new(vec![0.0, 0.1, 0.2, 0.25, 0.3, 0.5]).unwrap();
        let rots: Vec<_> = (0..5)
            .map(|i| UnitQuaternion::from_scaled_axis(Vector3::new(0.1 * i as f64, -0.2, 0.05)))
            .collect();
        let pos: Vec<_> = (0..5).map(|i| Vector3::new(i as f64 / 3.0, 1.0, -2.0)).collect();
        let traj = Trajectory::new(knots, rots, pos).unwrap();
        let back = from_text(&to_text(&traj)).unwrap();
        assert_eq!(back.knots(), traj.knots());
        assert_eq!(back.positions(), traj.positions());
        for (a, b) in back.rotations().iter().zip(traj.rotations()) {
            assert!(a.angle_to(b) < 1e-15);
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(from_text("").is_err());
        assert!(from_text("knot: 1 2").is_err());
        assert!(from_text("knots: 0 1 2 3 4\n0 0 0 1 0 0\n").is_err());
    }

    #[test]
    fn sample_grid_is_global() {
        let ts = sample_times(1.005, 1.05, 100.0);
        assert_eq!(ts.len(), 4);
        assert!((ts[0] - 1.01).abs() < 1e-12);
    }
}
