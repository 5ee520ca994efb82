//! Time, rotation, rigid-transform and IMU-integration primitives.

mod imu;
mod rotation;
mod time;
mod transform;

pub use imu::{integrate_imu, integrate_imu_path, yaw_of, ImuSample, MotionState};
pub(crate) use imu::integrate_with;
pub use rotation::{skew, so3_exp, so3_log, Rotation, LOG_SINGULARITY_MARGIN};
pub use time::{Timestamp, TIME_EPS};
pub use transform::{compose, interpolate_pose, RigidTransform};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("rotation angle {angle} is too close to pi for the logarithm map")]
    RotationAtPi { angle: f64 },
    #[error("time {t} outside interpolation interval [{t0}, {t1}]")]
    OutsideInterval { t: f64, t0: f64, t1: f64 },
    #[error("quaternion has zero or non-finite norm")]
    DegenerateQuaternion,
}

#[cfg(test)]
mod group_tests {
    use super::*;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform<f64> {
        let w = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let t = Vector3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        RigidTransform::new(Rotation::exp(&w), t)
    }

    #[test]
    fn group_axioms_on_random_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let (a, b, c) = (random_transform(&mut rng), random_transform(&mut rng), random_transform(&mut rng));
            let p = Vector3::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0));
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            assert!(left.rotation.angle_to(&right.rotation) < 1e-9);
            assert!((left.translation - right.translation).norm() < 1e-9);
            let e = compose(&a, &a.inverse());
            assert!(e.rotation.angle() < 1e-9 && e.translation.norm() < 1e-9);
            assert!((compose(&a, &b).apply(&p) - a.apply(&b.apply(&p))).norm() < 1e-9);
            for r in [a.rotation, left.rotation, e.rotation] {
                assert!((r.quaternion().norm() - 1.0).abs() < 1e-9);
                assert!(r.wxyz()[0] >= 0.0);
            }
        }
    }
}
