//! LiDAR-inertial odometry: IMU propagation, motion compensation, point-to-plane
//! registration against a hash voxel map, and map maintenance.

mod deskew;
mod propagate;
mod register;
mod state;
mod voxel_map;

pub use deskew::{compensate_motion, deskew_along, Deskewed};
pub use propagate::{propagate, ImuNoise};
pub use register::{
    fit_plane, grid_downsample, register, Plane, RegistrationConfig, RegistrationOutcome, RegistrationStatus,
};
pub use state::{
    covariance_is_valid, diagonal_covariance, motion_difference, symmetrize, NavState, StateCovariance,
    StateVector, BA, BG, POS, ROT, STATE_DIM, VEL,
};
pub use voxel_map::{MapPoint, VoxelIndex, VoxelMap, VoxelMapConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LioError {
    #[error("IMU gap from {from} to {to} exceeds twice the nominal period")]
    ImuGap { from: f64, to: f64 },
}
