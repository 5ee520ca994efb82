//! LiDAR-inertial-visual odometry and colored mapping.
//!
//! Raw LiDAR sweeps are re-cut so that reconstructed sweeps end exactly at image
//! timestamps ([`sweep`]). A LiDAR-inertial error-state iterated Kalman filter ([`lio`])
//! estimates the full navigation state at each sweep end; the vision filter ([`vision`])
//! only refines camera parameters (time offset, extrinsics, intrinsics) and colors the map.
//! [`sim`] generates synthetic sensor streams with exact ground truth.
//!
//! The numeric cores are generic over [`Real`]; the aliases below fix the scalar to `f64`.

pub mod eval;
pub mod geometry;
pub mod io;
pub mod lio;
pub mod pipeline;
mod scalar;
pub mod sim;
pub mod sweep;
pub mod vision;

pub use geometry::Timestamp;
pub use scalar::Real;

pub type Rotation = geometry::Rotation<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type ImuSample = geometry::ImuSample<f64>;
pub type MotionState = geometry::MotionState<f64>;
pub type CameraParams = vision::CameraParams<f64>;
pub type CameraFilter = vision::CameraFilter<f64>;

pub type Rotation32 = geometry::Rotation<f32>;
pub type RigidTransform32 = geometry::RigidTransform<f32>;
pub type CameraParams32 = vision::CameraParams<f32>;
