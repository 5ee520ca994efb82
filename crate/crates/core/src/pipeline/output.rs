//! Run directory layout:
//!
//! ```text
//! trajectory.txt     TUM rows, one per packet
//! camera_params.txt  stamp time_offset fx fy cx cy x y z qw qx qy qz (camera -> IMU)
//! timing.csv         stamp,lidar_ms,vision_ms,total_ms
//! packets.csv        per-packet log
//! map.csv            id,x,y,z,r,g,b,weight,rendered
//! map.ply            colored map
//! ```

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::RunOutput;
use crate::io::{format_transform, write_ply, write_tum, IoError, PlyVertex};
use crate::lio::{MapPoint, RegistrationStatus, VoxelMap};
use crate::vision::UpdateStatus;

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|e| IoError::file(path, e))
}

fn status(s: &Option<UpdateStatus>) -> String {
    match s {
        None => "none".into(),
        Some(UpdateStatus::Skipped { usable }) => format!("skipped:{usable}"),
        Some(UpdateStatus::Updated { iterations, rows, .. }) => format!("updated:{iterations}:{rows}"),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| v.to_string())
}

/// PLY vertices of every map point, in insertion order. Colors are rounded and clamped.
pub fn map_vertices<'a>(points: impl IntoIterator<Item = &'a MapPoint>) -> Vec<PlyVertex> {
    points
        .into_iter()
        .map(|p| PlyVertex {
            position: [p.position.x as f32, p.position.y as f32, p.position.z as f32],
            color: [p.color.x, p.color.y, p.color.z].map(|c| c.round().clamp(0.0, 255.0) as u8),
        })
        .collect()
}

pub fn write_map_csv(path: &Path, map: &VoxelMap) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| IoError::file(path, e))?;
    w.write_record(["id", "x", "y", "z", "r", "g", "b", "weight", "rendered"]).map_err(|e| IoError::file(path, e))?;
    for p in map.points() {
        let row = [
            p.id.to_string(),
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.position.z.to_string(),
            p.color.x.to_string(),
            p.color.y.to_string(),
            p.color.z.to_string(),
            p.color_weight.to_string(),
            u8::from(p.rendered).to_string(),
        ];
        w.write_record(&row).map_err(|e| IoError::file(path, e))?;
    }
    w.flush().map_err(|e| IoError::file(path, e))
}

pub fn read_map_csv(path: &Path) -> Result<Vec<MapPoint>, IoError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| IoError::file(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let bad = |m: String| IoError::ParseFile { path: path.display().to_string(), line: i + 2, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 9 {
            return Err(bad(format!("expected 9 fields, got {}", rec.len())));
        }
        let num = |k: usize| rec[k].trim().parse::<f64>().map_err(|_| bad(format!("bad number `{}`", &rec[k])));
        out.push(MapPoint {
            id: rec[0].trim().parse().map_err(|_| bad(format!("bad id `{}`", &rec[0])))?,
            position: Vector3::new(num(1)?, num(2)?, num(3)?),
            color: Vector3::new(num(4)?, num(5)?, num(6)?),
            color_weight: num(7)?,
            insert_stamp: crate::geometry::Timestamp(0.0),
            rendered: num(8)? != 0.0,
        });
    }
    Ok(out)
}

/// Writes every artifact of a run into `dir`, creating it if needed.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<(), IoError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    write_tum(&dir.join("trajectory.txt"), &out.trajectory)?;

    let mut text = String::from("# stamp time_offset fx fy cx cy x y z qw qx qy qz\n");
    for (t, p) in &out.camera_history {
        let i = p.intrinsics;
        let _ = writeln!(text, "{t} {} {} {} {} {} {}", p.time_offset, i.fx, i.fy, i.cx, i.cy, format_transform(&p.extrinsic));
    }
    write_text(&dir.join("camera_params.txt"), &text)?;

    let mut text = String::from("stamp,lidar_ms,vision_ms,total_ms\n");
    for t in &out.timings {
        let _ = writeln!(text, "{},{:.3},{:.3},{:.3}", t.stamp, t.lidar * 1e3, t.vision * 1e3, t.total * 1e3);
    }
    write_text(&dir.join("timing.csv"), &text)?;

    let mut text = String::from("index,begin,end,points,image_stamp,vision_nav_stamp,registration,correspondences,pnp,photometric,features,rendered\n");
    for p in &out.packets {
        let (reg, corr) = match p.registration {
            RegistrationStatus::Bootstrap => ("bootstrap", 0),
            RegistrationStatus::Converged { correspondences, .. } => ("converged", correspondences),
            RegistrationStatus::Degenerate { correspondences } => ("degenerate", correspondences),
        };
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{reg},{corr},{},{},{},{}",
            p.index,
            p.begin,
            p.end,
            p.points,
            opt(p.image_stamp),
            opt(p.vision_nav_stamp),
            status(&p.pnp),
            status(&p.photometric),
            p.features,
            p.rendered
        );
    }
    write_text(&dir.join("packets.csv"), &text)?;

    write_map_csv(&dir.join("map.csv"), &out.map)?;
    write_ply(&dir.join("map.ply"), &map_vertices(out.map.points()))
}
