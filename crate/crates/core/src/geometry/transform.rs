use nalgebra::{Matrix3, Vector3};

use super::{GeometryError, Rotation, Timestamp};
use crate::scalar::Real;

/// Rigid body transform `p -> R p + t`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct RigidTransform<T: Real> {
    pub rotation: Rotation<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    pub fn new(rotation: Rotation<T>, translation: Vector3<T>) -> Self {
        Self { rotation, translation }
    }

    pub fn identity() -> Self {
        Self { rotation: Rotation::identity(), translation: Vector3::zeros() }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self { rotation: Rotation::identity(), translation }
    }

    pub fn from_rotation(rotation: Rotation<T>) -> Self {
        Self { rotation, translation: Vector3::zeros() }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform<T>) -> RigidTransform<T> {
        RigidTransform {
            rotation: self.rotation.compose(&other.rotation),
            translation: self.rotation.apply(&other.translation) + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform<T> {
        let rotation = self.rotation.inverse();
        RigidTransform { translation: -rotation.apply(&self.translation), rotation }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply(p) + self.translation
    }

    /// Applies the inverse transform without materializing it.
    #[inline]
    pub fn apply_inverse(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation.apply_inverse(&(p - self.translation))
    }

    pub fn rotation_matrix(&self) -> Matrix3<T> {
        self.rotation.matrix()
    }

    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.cast(),
            translation: self.translation.map(|v| U::lit(v.as_f64())),
        }
    }
}

/// Free-function form of [`RigidTransform::compose`].
pub fn compose<T: Real>(a: &RigidTransform<T>, b: &RigidTransform<T>) -> RigidTransform<T> {
    a.compose(b)
}

/// Interpolates between two stamped poses: slerp on rotation, linear on translation.
pub fn interpolate_pose<T: Real>(
    p0: &RigidTransform<T>,
    t0: Timestamp,
    p1: &RigidTransform<T>,
    t1: Timestamp,
    t: Timestamp,
) -> Result<RigidTransform<T>, GeometryError> {
    if t.secs() < t0.secs() - super::TIME_EPS || t.secs() > t1.secs() + super::TIME_EPS {
        return Err(GeometryError::OutsideInterval { t: t.secs(), t0: t0.secs(), t1: t1.secs() });
    }
    let span = t1 - t0;
    if span <= 0.0 {
        return Ok(*p0);
    }
    let s = ((t - t0) / span).clamp(0.0, 1.0);
    if s == 0.0 {
        return Ok(*p0);
    }
    if s == 1.0 {
        return Ok(*p1);
    }
    let s = T::lit(s);
    Ok(RigidTransform {
        rotation: p0.rotation.slerp(&p1.rotation, s),
        translation: p0.translation + (p1.translation - p0.translation) * s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn rz90_plus_x() -> RigidTransform<f64> {
        RigidTransform::new(Rotation::yaw(FRAC_PI_2), Vector3::new(1.0, 0.0, 0.0))
    }

    #[test]
    fn identity_and_inverse_cases() {
        let t = rz90_plus_x();
        let id = RigidTransform::identity();
        assert_eq!(compose(&id, &t), t);
        let e = compose(&t, &t.inverse());
        assert!(e.rotation.angle() < 1e-12);
        assert!(e.translation.norm() < 1e-12);
    }

    #[test]
    fn successive_maps() {
        let a = rz90_plus_x();
        let b = RigidTransform::from_rotation(Rotation::yaw(FRAC_PI_2));
        let x = Vector3::new(1.0, 0.0, 0.0);
        let p = compose(&a, &b).apply(&x);
        // b: (1,0,0) -> (0,1,0); a: Rz90 -> (-1,0,0), then +(1,0,0)
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(p, a.apply(&b.apply(&x)), epsilon = 1e-12);
        // a alone: Rz90 (1,0,0) + (1,0,0)
        assert_relative_eq!(a.apply(&x), Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn interpolation_endpoints_and_midpoints() {
        let p0 = RigidTransform::<f64>::identity();
        let p1 = RigidTransform::from_translation(Vector3::new(2.0, 0.0, 0.0));
        let (t0, t1) = (Timestamp(1.0), Timestamp(2.0));
        assert_eq!(interpolate_pose(&p0, t0, &p1, t1, t0).unwrap(), p0);
        assert_eq!(interpolate_pose(&p0, t0, &p1, t1, t1).unwrap(), p1);
        let mid = interpolate_pose(&p0, t0, &p1, t1, Timestamp(1.5)).unwrap();
        assert_relative_eq!(mid.translation, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-15);

        let r1 = RigidTransform::from_rotation(Rotation::yaw(FRAC_PI_2));
        let mid = interpolate_pose(&p0, t0, &r1, t1, Timestamp(1.5)).unwrap();
        assert!(mid.rotation.angle_to(&Rotation::yaw(FRAC_PI_2 / 2.0)) < 1e-9);

        assert!(matches!(
            interpolate_pose(&p0, t0, &p1, t1, Timestamp(2.5)),
            Err(GeometryError::OutsideInterval { .. })
        ));
    }
}
