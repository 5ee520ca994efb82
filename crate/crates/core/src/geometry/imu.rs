use nalgebra::Vector3;

use super::{RigidTransform, Rotation, Timestamp};
use crate::scalar::Real;

/// One IMU reading in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuSample<T: Real> {
    pub stamp: Timestamp,
    /// rad/s
    pub angular_velocity: Vector3<T>,
    /// specific force, m/s^2
    pub linear_acceleration: Vector3<T>,
}

impl<T: Real> ImuSample<T> {
    pub fn new(stamp: Timestamp, angular_velocity: Vector3<T>, linear_acceleration: Vector3<T>) -> Self {
        Self { stamp, angular_velocity, linear_acceleration }
    }

    pub fn is_finite(&self) -> bool {
        self.stamp.is_finite()
            && self.angular_velocity.iter().all(|v| v.is_finite())
            && self.linear_acceleration.iter().all(|v| v.is_finite())
    }

    /// Linear interpolation between two readings, re-stamped at `t`.
    pub fn lerp(a: &ImuSample<T>, b: &ImuSample<T>, t: Timestamp) -> ImuSample<T> {
        let span = b.stamp - a.stamp;
        let s = if span <= 0.0 { 0.0 } else { ((t - a.stamp) / span).clamp(0.0, 1.0) };
        let s = T::lit(s);
        ImuSample {
            stamp: t,
            angular_velocity: a.angular_velocity + (b.angular_velocity - a.angular_velocity) * s,
            linear_acceleration: a.linear_acceleration
                + (b.linear_acceleration - a.linear_acceleration) * s,
        }
    }
}

/// Kinematic part of the navigation state: pose world<-IMU, velocity and biases.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionState<T: Real> {
    pub stamp: Timestamp,
    pub pose: RigidTransform<T>,
    pub velocity: Vector3<T>,
    pub gyro_bias: Vector3<T>,
    pub accel_bias: Vector3<T>,
}

impl<T: Real> MotionState<T> {
    pub fn at_rest(stamp: Timestamp) -> Self {
        Self {
            stamp,
            pose: RigidTransform::identity(),
            velocity: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
        }
    }
}

/// One midpoint step from `state` over `dt` seconds between readings `left` and `right`.
pub(crate) fn midpoint_step<T: Real>(
    state: &MotionState<T>,
    left: &ImuSample<T>,
    right: &ImuSample<T>,
    dt: T,
    gravity: &Vector3<T>,
) -> MotionState<T> {
    let half = T::lit(0.5);
    let omega = (left.angular_velocity + right.angular_velocity) * half - state.gyro_bias;
    let r0 = state.pose.rotation;
    let r1 = r0.boxplus(&(omega * dt));
    let acc = (r0.apply(&(left.linear_acceleration - state.accel_bias))
        + r1.apply(&(right.linear_acceleration - state.accel_bias)))
        * half
        + gravity;
    let p1 = state.pose.translation + state.velocity * dt + acc * (half * dt * dt);
    MotionState {
        stamp: right.stamp,
        pose: RigidTransform::new(r1, p1),
        velocity: state.velocity + acc * dt,
        gyro_bias: state.gyro_bias,
        accel_bias: state.accel_bias,
    }
}

/// Drives `visit` with every intermediate state of a midpoint integration.
///
/// Samples stamped at or before `state.stamp` only seed the left-hand reading; the first
/// later sample is held constant back to `state.stamp` when no such seed exists.
pub(crate) fn integrate_with<T: Real>(
    state: &MotionState<T>,
    samples: &[ImuSample<T>],
    gravity: &Vector3<T>,
    mut visit: impl FnMut(&MotionState<T>, &ImuSample<T>, &ImuSample<T>, T),
) -> MotionState<T> {
    let mut current = *state;
    let mut left: Option<ImuSample<T>> = None;
    for sample in samples {
        let dt = sample.stamp - current.stamp;
        if dt <= 0.0 {
            left = Some(*sample);
            continue;
        }
        let l = left.unwrap_or(*sample);
        let next = midpoint_step(&current, &l, sample, T::lit(dt), gravity);
        visit(&current, &l, sample, T::lit(dt));
        current = next;
        left = Some(*sample);
    }
    current
}

/// Integrates IMU readings from `state` up to the last sample stamp.
pub fn integrate_imu<T: Real>(
    state: &MotionState<T>,
    samples: &[ImuSample<T>],
    gravity: &Vector3<T>,
) -> MotionState<T> {
    integrate_with(state, samples, gravity, |_, _, _, _| {})
}

/// Like [`integrate_imu`] but returns the state at the start and after every step.
pub fn integrate_imu_path<T: Real>(
    state: &MotionState<T>,
    samples: &[ImuSample<T>],
    gravity: &Vector3<T>,
) -> Vec<MotionState<T>> {
    let mut path = vec![*state];
    let mut current = *state;
    let mut left: Option<ImuSample<T>> = None;
    for sample in samples {
        let dt = sample.stamp - current.stamp;
        if dt <= 0.0 {
            left = Some(*sample);
            continue;
        }
        let l = left.unwrap_or(*sample);
        current = midpoint_step(&current, &l, sample, T::lit(dt), gravity);
        path.push(current);
        left = Some(*sample);
    }
    path
}

/// Rotation-only convenience used by tests and the simulator.
pub fn yaw_of<T: Real>(r: &Rotation<T>) -> T {
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}
