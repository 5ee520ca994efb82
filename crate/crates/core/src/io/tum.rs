use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::kv::parse_numbers;
use super::IoError;
use crate::geometry::{RigidTransform, Rotation};

/// Stamped world←IMU poses with strictly increasing stamps.
pub type TrajectoryRecord = Vec<(f64, RigidTransform<f64>)>;

/// `stamp tx ty tz qx qy qz qw` rows. Floats use the shortest representation that reads
/// back to the same value.
pub fn format_tum(traj: &[(f64, RigidTransform<f64>)]) -> String {
    let mut out = String::with_capacity(traj.len() * 96);
    for (t, pose) in traj {
        let p = pose.translation;
        let [w, x, y, z] = pose.rotation.wxyz();
        let _ = writeln!(out, "{t} {} {} {} {x} {y} {z} {w}", p.x, p.y, p.z);
    }
    out
}

pub fn parse_tum(text: &str) -> Result<TrajectoryRecord, IoError> {
    let mut out: TrajectoryRecord = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v = parse_numbers(line, i + 1)?;
        if v.len() != 8 {
            return Err(IoError::Parse { line: i + 1, message: format!("expected 8 fields, got {}", v.len()) });
        }
        let q = Quaternion::new(v[7], v[4], v[5], v[6]);
        if !(q.norm() > 1e-9) {
            return Err(IoError::Parse { line: i + 1, message: "degenerate quaternion".into() });
        }
        if out.last().is_some_and(|(t, _)| !(v[0] > *t)) {
            return Err(IoError::Parse { line: i + 1, message: "stamps must strictly increase".into() });
        }
        let rotation = Rotation::from_unit_quaternion(UnitQuaternion::new_normalize(q));
        out.push((v[0], RigidTransform::new(rotation, Vector3::new(v[1], v[2], v[3]))));
    }
    Ok(out)
}

pub fn write_tum(path: &Path, traj: &[(f64, RigidTransform<f64>)]) -> Result<(), IoError> {
    std::fs::write(path, format_tum(traj)).map_err(|e| IoError::file(path, e))
}

pub fn read_tum(path: &Path) -> Result<TrajectoryRecord, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_tum(&text).map_err(|e| e.in_file(path))
}
