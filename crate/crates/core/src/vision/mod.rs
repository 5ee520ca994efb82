//! Camera-parameter refinement and map coloring.
//!
//! The vision side never estimates the platform pose. Given the navigation pose at an
//! image's stamp it refines the camera time offset, camera→IMU extrinsic and pin-hole
//! intrinsics with an iterated error-state filter, first from tracked-feature
//! re-projection errors and then from photometric errors, and finally renders image
//! colors into the map.

mod camera;
mod filter;
mod image;
mod render;
mod track;
mod undistort;

pub use camera::{
    pinhole, project, projection_jacobian, reprojection_residual, world_to_camera, CameraCovariance,
    CameraErrorState, CameraParams, Intrinsics, PixelJacobian, CAM_DIM, EXT_POS, EXT_ROT, INTR, MIN_DEPTH, T_OFF,
};
pub use filter::{photometric_residual, CameraFilter, PhotometricPoint, UpdateStatus, VisionConfig};
pub use image::{ImageFrame, IntensityField};
pub use render::{extract_recent_points, fuse_color, render, render_weight, RenderConfig, RenderReport};
pub use track::{promote_features, track_features, PromotionConfig, TrackedFeature, TrackerConfig};
pub use undistort::{undistort_image, Distortion};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VisionError {
    #[error("point at depth {depth} is behind the camera")]
    BehindCamera { depth: f64 },
}
