//! On-disk bundle format: one directory of CSV files plus the config snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{Vector2, Vector3};

use super::generate::{ground_truth, SimBundle};
use super::world::PlaneWorld;
use crate::config::Config;
use crate::error::IoError;
use crate::sensors::{Bias, CameraFrame, ImuSample, LidarPoint, LidarScan, PixelObservation};
use crate::spline::io::to_tum;

fn write(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}

fn read(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|e| IoError::io(path, e))
}

/// Data rows of a CSV file with a header, split on commas.
fn rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>, IoError> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| IoError::format(path, idx + 1, e.to_string()))?;
        if vals.len() != width {
            return Err(IoError::format(path, idx + 1, format!("expected {width} columns, got {}", vals.len())));
        }
        out.push(vals);
    }
    Ok(out)
}

/// Timestamped files `<prefix><t>.csv` in `dir`, sorted by time.
fn timed_files(dir: &Path, prefix: &str) -> Result<Vec<(f64, std::path::PathBuf)>, IoError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| IoError::io(dir, e))? {
        let path = entry.map_err(|e| IoError::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        if let Some(t) = name.strip_prefix(prefix).and_then(|r| r.strip_suffix(".csv")) {
            let t: f64 = t.parse().map_err(|_| IoError::format(&path, 0, "bad timestamp in file name"))?;
            out.push((t, path));
        }
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

pub fn write_bundle(bundle: &SimBundle, dir: &Path) -> Result<(), IoError> {
    for sub in [dir.to_path_buf(), dir.join("lidar"), dir.join("camera")] {
        fs::create_dir_all(&sub).map_err(|e| IoError::io(&sub, e))?;
    }
    write(&dir.join("config.toml"), &bundle.config.to_toml())?;

    let mut imu = String::from("t,wx,wy,wz,ax,ay,az\n");
    for m in &bundle.imu {
        imu.push_str(&format!("{},{},{},{},{},{},{}\n", m.t, m.gyro.x, m.gyro.y, m.gyro.z, m.accel.x, m.accel.y, m.accel.z));
    }
    write(&dir.join("imu.csv"), &imu)?;

    let mut bias = String::from("t,bgx,bgy,bgz,bax,bay,baz\n");
    for (m, b) in bundle.imu.iter().zip(&bundle.true_bias) {
        bias.push_str(&format!("{},{},{},{},{},{},{}\n", m.t, b.gyro.x, b.gyro.y, b.gyro.z, b.accel.x, b.accel.y, b.accel.z));
    }
    write(&dir.join("imu_bias.csv"), &bias)?;

    for scan in &bundle.scans {
        let mut s = String::from("t_point,x,y,z\n");
        for p in &scan.points {
            s.push_str(&format!("{},{},{},{}\n", p.t, p.point.x, p.point.y, p.point.z));
        }
        write(&dir.join("lidar").join(format!("scan_{:.6}.csv", scan.t_start)), &s)?;
    }

    let mut outliers = String::from("t,landmark_id\n");
    for (frame, out) in bundle.frames.iter().zip(&bundle.outliers) {
        let mut s = String::from("landmark_id,u,v\n");
        for o in &frame.observations {
            s.push_str(&format!("{},{},{}\n", o.landmark_id, o.pixel.x, o.pixel.y));
        }
        write(&dir.join("camera").join(format!("frame_{:.6}.csv", frame.t)), &s)?;
        for id in out {
            outliers.push_str(&format!("{:.6},{}\n", frame.t, id));
        }
    }
    write(&dir.join("camera_outliers.csv"), &outliers)?;

    let mut lms = String::from("id,x,y,z\n");
    for (id, x) in &bundle.landmarks {
        lms.push_str(&format!("{},{},{},{}\n", id, x.x, x.y, x.z));
    }
    write(&dir.join("landmarks.csv"), &lms)?;
    write(&dir.join("gt.tum"), &to_tum(&bundle.gt, 0.0, bundle.gt.duration, 100.0))
}

pub fn read_bundle(dir: &Path) -> Result<SimBundle, IoError> {
    let config = Config::from_toml(&read(&dir.join("config.toml"))?)?;
    config.validate()?;
    let gt = ground_truth(&config)?;

    let imu: Vec<ImuSample> = rows(&dir.join("imu.csv"), 7)?
        .into_iter()
        .map(|r| ImuSample {
            t: r[0],
            gyro: Vector3::new(r[1], r[2], r[3]),
            accel: Vector3::new(r[4], r[5], r[6]),
        })
        .collect();
    let bias_path = dir.join("imu_bias.csv");
    let true_bias = if bias_path.exists() {
        rows(&bias_path, 7)?
            .into_iter()
            .map(|r| Bias {
                gyro: Vector3::new(r[1], r[2], r[3]),
                accel: Vector3::new(r[4], r[5], r[6]),
            })
            .collect()
    } else {
        Vec::new()
    };

    let mut scans = Vec::new();
    for (t_start, path) in timed_files(&dir.join("lidar"), "scan_")? {
        let points = rows(&path, 4)?
            .into_iter()
            .map(|r| LidarPoint {
                t: r[0],
                point: Vector3::new(r[1], r[2], r[3]),
            })
            .collect();
        scans.push(LidarScan { t_start, points });
    }

    let mut frames = Vec::new();
    let mut index = BTreeMap::new();
    for (t, path) in timed_files(&dir.join("camera"), "frame_")? {
        let observations = rows(&path, 3)?
            .into_iter()
            .map(|r| PixelObservation {
                landmark_id: r[0] as u64,
                pixel: Vector2::new(r[1], r[2]),
            })
            .collect();
        index.insert(format!("{t:.6}"), frames.len());
        frames.push(CameraFrame { t, observations });
    }
    let mut outliers = vec![Vec::new(); frames.len()];
    let out_path = dir.join("camera_outliers.csv");
    if out_path.exists() {
        for r in rows(&out_path, 2)? {
            if let Some(&k) = index.get(&format!("{:.6}", r[0])) {
                outliers[k].push(r[1] as u64);
            }
        }
    }

    let landmarks = rows(&dir.join("landmarks.csv"), 4)?
        .into_iter()
        .map(|r| (r[0] as u64, Vector3::new(r[1], r[2], r[3])))
        .collect();

    Ok(SimBundle {
        config,
        gt,
        world: PlaneWorld::room(),
        landmarks,
        imu,
        true_bias,
        scans,
        frames,
        outliers,
    })
}
