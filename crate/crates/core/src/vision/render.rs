use nalgebra::Vector3;

use super::camera::{pinhole, world_to_camera, CameraParams, MIN_DEPTH};
use super::image::ImageFrame;
use crate::geometry::RigidTransform;
use crate::lio::{MapPoint, VoxelMap};
use crate::scalar::Real;

/// The newest point of every recently visited voxel, in visit order. Ties on the insert
/// stamp go to the later insertion.
pub fn extract_recent_points(map: &VoxelMap) -> Vec<MapPoint> {
    map.recently_visited()
        .iter()
        .filter_map(|idx| {
            map.cell(idx)?
                .iter()
                .max_by(|a, b| a.insert_stamp.secs().total_cmp(&b.insert_stamp.secs()).then(a.id.cmp(&b.id)))
                .cloned()
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    /// Cap on the accumulated fusion weight.
    pub max_weight: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { max_weight: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RenderReport {
    /// Points in recently visited voxels.
    pub candidates: usize,
    /// Points that received a color this frame.
    pub colored: usize,
}

/// Observation weight: inverse squared depth relative to one meter, capped at 1.
#[inline]
pub fn render_weight(depth: f64) -> f64 {
    1.0 / (depth * depth).max(1.0)
}

/// Fuses one observation into a point's running color average.
pub fn fuse_color(point: &mut MapPoint, observed: &Vector3<f64>, weight: f64, max_weight: f64) {
    let total = point.color_weight + weight;
    point.color = (point.color * point.color_weight + observed * weight) / total;
    point.color_weight = total.min(max_weight);
    point.rendered = true;
}

/// Colors every point of every recently visited voxel that projects inside `image`.
/// Projection uses the pin-hole term only; map points carry no image flow.
pub fn render<T: Real>(
    map: &mut VoxelMap,
    image: &ImageFrame,
    params: &CameraParams<T>,
    nav_pose: &RigidTransform<T>,
    cfg: &RenderConfig,
) -> RenderReport {
    let visited = map.recently_visited().to_vec();
    let mut report = RenderReport::default();
    for idx in &visited {
        let Some(cell) = map.cell_mut(idx) else { continue };
        for point in cell.iter_mut() {
            report.candidates += 1;
            let p = point.position;
            let pc = world_to_camera(&Vector3::new(T::lit(p.x), T::lit(p.y), T::lit(p.z)), nav_pose, params);
            if !(pc.z > T::lit(MIN_DEPTH)) {
                continue;
            }
            let px = pinhole(&pc, &params.intrinsics);
            let (u, v) = (px.x.as_f64(), px.y.as_f64());
            if !image.contains(u, v, 0.0) {
                continue;
            }
            let observed = if image.channels == 1 {
                Vector3::repeat(image.bilinear(u, v, 0))
            } else {
                Vector3::new(image.bilinear(u, v, 0), image.bilinear(u, v, 1), image.bilinear(u, v, 2))
            };
            fuse_color(point, &observed, render_weight(pc.z.as_f64()), cfg.max_weight);
            report.colored += 1;
        }
    }
    report
}
