use nalgebra::{Matrix3, Vector3};

use super::state::{symmetrize, NavState, StateCovariance, BA, BG, POS, ROT, VEL};
use super::LioError;
use crate::geometry::{integrate_with, skew, ImuSample, Rotation, TIME_EPS};

/// Continuous-time IMU noise model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro_density: f64,
    /// m/s²/√Hz
    pub accel_density: f64,
    /// rad/s²/√Hz
    pub gyro_bias_walk: f64,
    /// m/s³/√Hz
    pub accel_bias_walk: f64,
    /// Expected spacing of IMU readings in seconds.
    pub nominal_period: f64,
}

impl Default for ImuNoise {
    fn default() -> Self {
        Self {
            gyro_density: 1e-3,
            accel_density: 1e-2,
            gyro_bias_walk: 1e-5,
            accel_bias_walk: 1e-4,
            nominal_period: 1.0 / 200.0,
        }
    }
}

/// Propagates mean and covariance through `imu`. The output stamp is the last reading's.
pub fn propagate(
    state: &NavState,
    imu: &[ImuSample<f64>],
    noise: &ImuNoise,
    gravity: &Vector3<f64>,
) -> Result<NavState, LioError> {
    let max_gap = 2.0 * noise.nominal_period + TIME_EPS;
    let mut prev = state.stamp();
    for s in imu {
        let gap = s.stamp - prev;
        if gap > max_gap {
            return Err(LioError::ImuGap { from: prev.secs(), to: s.stamp.secs() });
        }
        prev = if s.stamp.secs() > prev.secs() { s.stamp } else { prev };
    }

    let mut cov = state.covariance;
    let motion = integrate_with(&state.motion, imu, gravity, |current, left, right, dt| {
        let omega = (left.angular_velocity + right.angular_velocity) * 0.5 - current.gyro_bias;
        let force = (left.linear_acceleration + right.linear_acceleration) * 0.5 - current.accel_bias;
        let rot = current.pose.rotation.matrix();
        let f = transition(&omega, &force, &rot, dt);
        cov = f * cov * f.transpose() + process_noise(noise, dt);
    });
    symmetrize(&mut cov);
    Ok(NavState { motion, covariance: cov })
}

fn transition(omega: &Vector3<f64>, force: &Vector3<f64>, rot: &Matrix3<f64>, dt: f64) -> StateCovariance {
    let mut f = StateCovariance::identity();
    let i3 = Matrix3::identity();
    f.fixed_view_mut::<3, 3>(ROT, ROT).copy_from(&Rotation::exp(&(-omega * dt)).matrix());
    f.fixed_view_mut::<3, 3>(ROT, BG).copy_from(&(-i3 * dt));
    f.fixed_view_mut::<3, 3>(POS, VEL).copy_from(&(i3 * dt));
    f.fixed_view_mut::<3, 3>(VEL, ROT).copy_from(&(-rot * skew(force) * dt));
    f.fixed_view_mut::<3, 3>(VEL, BA).copy_from(&(-rot * dt));
    f
}

fn process_noise(noise: &ImuNoise, dt: f64) -> StateCovariance {
    let mut q = StateCovariance::zeros();
    let blocks = [
        (ROT, noise.gyro_density),
        (VEL, noise.accel_density),
        (BG, noise.gyro_bias_walk),
        (BA, noise.accel_bias_walk),
    ];
    for (offset, density) in blocks {
        for i in 0..3 {
            q[(offset + i, offset + i)] = density * density * dt;
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{MotionState, Timestamp};
    use crate::lio::state::diagonal_covariance;

    fn readings(n: usize, dt: f64, w: Vector3<f64>, a: Vector3<f64>) -> Vec<ImuSample<f64>> {
        (1..=n).map(|i| ImuSample::new(Timestamp(i as f64 * dt), w, a)).collect()
    }

    fn zero_noise() -> ImuNoise {
        ImuNoise { gyro_density: 0.0, accel_density: 0.0, gyro_bias_walk: 0.0, accel_bias_walk: 0.0, nominal_period: 0.005 }
    }

    #[test]
    fn zero_noise_zero_rates_keeps_everything() {
        // velocity and bias blocks are empty, so the cross-coupling terms have nothing to move
        let p0 = diagonal_covariance(0.01, 0.1, 0.0, 0.0, 0.0);
        let s = NavState::new(MotionState::at_rest(Timestamp(0.0)), p0);
        let out = propagate(&s, &readings(20, 0.005, Vector3::zeros(), Vector3::zeros()), &zero_noise(), &Vector3::zeros()).unwrap();
        assert_eq!(out.motion.pose, s.motion.pose);
        assert!((out.covariance - p0).abs().max() < 1e-15);
    }

    #[test]
    fn process_noise_increases_trace() {
        let s = NavState::new(MotionState::at_rest(Timestamp(0.0)), diagonal_covariance(0.01, 0.1, 0.1, 1e-3, 1e-2));
        let g = Vector3::new(0.0, 0.0, -9.81);
        let imu = readings(20, 0.005, Vector3::new(0.1, -0.2, 0.3), Vector3::new(0.5, 0.0, 9.81));
        let out = propagate(&s, &imu, &ImuNoise::default(), &g).unwrap();
        assert!(out.covariance.trace() > s.covariance.trace());
        assert!(out.covariance_is_valid(1e-9));
        assert_eq!(out.stamp(), Timestamp(0.1));
    }

    #[test]
    fn constant_velocity_advances_position() {
        let mut m = MotionState::at_rest(Timestamp(0.0));
        m.velocity = Vector3::new(1.5, -0.5, 0.2);
        let s = NavState::new(m, diagonal_covariance(0.01, 0.1, 0.1, 1e-3, 1e-2));
        let g = Vector3::new(0.0, 0.0, -9.81);
        let out = propagate(&s, &readings(20, 0.005, Vector3::zeros(), -g), &ImuNoise::default(), &g).unwrap();
        assert!((out.motion.pose.translation - m.velocity * 0.1).norm() < 1e-6);
    }

    #[test]
    fn gap_is_reported() {
        let s = NavState::new(MotionState::at_rest(Timestamp(0.0)), StateCovariance::identity());
        let mut imu = readings(5, 0.005, Vector3::zeros(), Vector3::zeros());
        imu.push(ImuSample::new(Timestamp(0.05), Vector3::zeros(), Vector3::zeros()));
        let err = propagate(&s, &imu, &ImuNoise::default(), &Vector3::zeros()).unwrap_err();
        assert!(matches!(err, LioError::ImuGap { .. }));
    }
}
