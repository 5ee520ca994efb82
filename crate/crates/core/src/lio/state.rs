use nalgebra::{SMatrix, SVector, Vector3};

use crate::geometry::{MotionState, RigidTransform, Timestamp};

pub const STATE_DIM: usize = 15;
pub type StateCovariance = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type StateVector = SVector<f64, STATE_DIM>;

/// Offsets of the error-state blocks `(δθ, δp, δv, δbg, δba)`.
pub const ROT: usize = 0;
pub const POS: usize = 3;
pub const VEL: usize = 6;
pub const BG: usize = 9;
pub const BA: usize = 12;

/// Navigation state estimated by the LiDAR-inertial filter.
///
/// Rotation errors are right perturbations: `R_true = R * exp(δθ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NavState {
    pub motion: MotionState<f64>,
    pub covariance: StateCovariance,
}

impl NavState {
    pub fn new(motion: MotionState<f64>, covariance: StateCovariance) -> Self {
        Self { motion, covariance }
    }

    pub fn stamp(&self) -> Timestamp {
        self.motion.stamp
    }

    /// world <- IMU
    pub fn pose(&self) -> &RigidTransform<f64> {
        &self.motion.pose
    }

    pub fn velocity(&self) -> &Vector3<f64> {
        &self.motion.velocity
    }

    /// `self ⊞ δ`
    pub fn boxplus(&self, delta: &StateVector) -> MotionState<f64> {
        let m = &self.motion;
        MotionState {
            stamp: m.stamp,
            pose: RigidTransform::new(
                m.pose.rotation.boxplus(&delta.fixed_rows::<3>(ROT).into_owned()),
                m.pose.translation + delta.fixed_rows::<3>(POS),
            ),
            velocity: m.velocity + delta.fixed_rows::<3>(VEL),
            gyro_bias: m.gyro_bias + delta.fixed_rows::<3>(BG),
            accel_bias: m.accel_bias + delta.fixed_rows::<3>(BA),
        }
    }

    /// Checks symmetry and the eigenvalue floor of the covariance.
    pub fn covariance_is_valid(&self, tol: f64) -> bool {
        covariance_is_valid(&self.covariance, tol)
    }
}

/// `a ⊟ b` for motion states, in the error-state layout.
pub fn motion_difference(a: &MotionState<f64>, b: &MotionState<f64>) -> StateVector {
    let mut d = StateVector::zeros();
    d.fixed_rows_mut::<3>(ROT).copy_from(&a.pose.rotation.boxminus(&b.pose.rotation));
    d.fixed_rows_mut::<3>(POS).copy_from(&(a.pose.translation - b.pose.translation));
    d.fixed_rows_mut::<3>(VEL).copy_from(&(a.velocity - b.velocity));
    d.fixed_rows_mut::<3>(BG).copy_from(&(a.gyro_bias - b.gyro_bias));
    d.fixed_rows_mut::<3>(BA).copy_from(&(a.accel_bias - b.accel_bias));
    d
}

pub fn symmetrize<const N: usize>(m: &mut SMatrix<f64, N, N>) {
    let t = m.transpose();
    *m = (*m + t) * 0.5;
}

pub fn covariance_is_valid<const N: usize>(p: &SMatrix<f64, N, N>, tol: f64) -> bool {
    if (p - p.transpose()).abs().max() > tol * p.abs().max().max(1.0) {
        return false;
    }
    let sym = (p + p.transpose()) * 0.5;
    let dynamic = nalgebra::DMatrix::from_column_slice(N, N, sym.as_slice());
    dynamic.symmetric_eigenvalues().iter().all(|&e| e >= -tol)
}

/// Diagonal initial covariance from per-block standard deviations.
pub fn diagonal_covariance(rot: f64, pos: f64, vel: f64, bg: f64, ba: f64) -> StateCovariance {
    let mut p = StateCovariance::zeros();
    for (offset, sigma) in [(ROT, rot), (POS, pos), (VEL, vel), (BG, bg), (BA, ba)] {
        for i in 0..3 {
            p[(offset + i, offset + i)] = sigma * sigma;
        }
    }
    p
}
