use nalgebra::{Matrix3, Quaternion, UnitQuaternion, Vector3};

use super::GeometryError;
use crate::scalar::Real;

/// Rotation angles closer than this to pi are rejected by [`Rotation::log`].
pub const LOG_SINGULARITY_MARGIN: f64 = 1e-6;

/// Unit-quaternion rotation with the double cover resolved to `w >= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation<T: Real> {
    q: UnitQuaternion<T>,
}

impl<T: Real> Default for Rotation<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> Rotation<T> {
    pub fn identity() -> Self {
        Self { q: UnitQuaternion::identity() }
    }

    /// Builds a rotation from raw quaternion coefficients, normalizing them.
    pub fn from_wxyz(w: T, x: T, y: T, z: T) -> Result<Self, GeometryError> {
        let raw = Quaternion::new(w, x, y, z);
        let n = raw.norm();
        if !n.is_finite() || n <= T::small() {
            return Err(GeometryError::DegenerateQuaternion);
        }
        Ok(Self::canonical(raw / n))
    }

    pub fn from_unit_quaternion(q: UnitQuaternion<T>) -> Self {
        Self::canonical(q.into_inner())
    }

    pub fn from_matrix(m: &Matrix3<T>) -> Self {
        let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
        Self::from_unit_quaternion(UnitQuaternion::from_rotation_matrix(&rot))
    }

    pub fn from_axis_angle(axis: &Vector3<T>, angle: T) -> Self {
        let n = axis.norm();
        if n <= T::small() {
            return Self::identity();
        }
        Self::exp(&(axis * (angle / n)))
    }

    /// Rotation about +z.
    pub fn yaw(angle: T) -> Self {
        Self::exp(&Vector3::new(T::zero(), T::zero(), angle))
    }

    fn canonical(raw: Quaternion<T>) -> Self {
        let raw = if raw.w < T::zero() { -raw } else { raw };
        Self { q: UnitQuaternion::new_normalize(raw) }
    }

    /// Exponential map from a rotation vector (radians).
    pub fn exp(omega: &Vector3<T>) -> Self {
        let half = omega * T::lit(0.5);
        let theta_half = half.norm();
        let (w, s) = if theta_half < T::lit(1e-4) {
            // sin(x)/x and cos(x) by series, exact to double precision for this range
            let t2 = theta_half * theta_half;
            (
                T::one() - t2 * T::lit(0.5) + t2 * t2 / T::lit(24.0),
                T::one() - t2 / T::lit(6.0) + t2 * t2 / T::lit(120.0),
            )
        } else {
            (theta_half.cos(), theta_half.sin() / theta_half)
        };
        Self::canonical(Quaternion::new(w, half.x * s, half.y * s, half.z * s))
    }

    /// Logarithm map; fails within [`LOG_SINGULARITY_MARGIN`] of a half turn.
    pub fn log(&self) -> Result<Vector3<T>, GeometryError> {
        let angle = self.angle();
        if angle >= T::pi() - T::lit(LOG_SINGULARITY_MARGIN) {
            return Err(GeometryError::RotationAtPi { angle: angle.as_f64() });
        }
        Ok(self.log_unchecked())
    }

    /// Logarithm map without the singularity check; returns a vector of norm <= pi.
    pub fn log_unchecked(&self) -> Vector3<T> {
        let q = self.q.quaternion();
        let v = q.imag();
        let s = v.norm();
        let w = q.w;
        if s < T::lit(1e-8) {
            // 2 atan(s/w)/s -> 2/w (1 - s^2/(3 w^2))
            let k = T::lit(2.0) / w * (T::one() - s * s / (T::lit(3.0) * w * w));
            return v * k;
        }
        let angle = T::lit(2.0) * s.atan2(w);
        v * (angle / s)
    }

    /// Rotation angle in [0, pi].
    pub fn angle(&self) -> T {
        let q = self.q.quaternion();
        T::lit(2.0) * q.imag().norm().atan2(q.w)
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Rotation<T>) -> Rotation<T> {
        Self::canonical((self.q * other.q).into_inner())
    }

    pub fn inverse(&self) -> Rotation<T> {
        Self::canonical(self.q.inverse().into_inner())
    }

    #[inline]
    pub fn apply(&self, v: &Vector3<T>) -> Vector3<T> {
        self.q.transform_vector(v)
    }

    #[inline]
    pub fn apply_inverse(&self, v: &Vector3<T>) -> Vector3<T> {
        self.q.inverse_transform_vector(v)
    }

    pub fn matrix(&self) -> Matrix3<T> {
        self.q.to_rotation_matrix().into_inner()
    }

    pub fn quaternion(&self) -> &UnitQuaternion<T> {
        &self.q
    }

    /// Coefficients `(w, x, y, z)`.
    pub fn wxyz(&self) -> [T; 4] {
        let q = self.q.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Applies a right-multiplied increment: `self * exp(delta)`.
    pub fn boxplus(&self, delta: &Vector3<T>) -> Rotation<T> {
        self.compose(&Self::exp(delta))
    }

    /// Right-difference `log(other^-1 * self)`.
    pub fn boxminus(&self, other: &Rotation<T>) -> Vector3<T> {
        other.inverse().compose(self).log_unchecked()
    }

    /// Spherical interpolation; `s = 0` gives `self`, `s = 1` gives `other`.
    pub fn slerp(&self, other: &Rotation<T>, s: T) -> Rotation<T> {
        if s <= T::zero() {
            return *self;
        }
        if s >= T::one() {
            return *other;
        }
        let delta = other.boxminus(self);
        self.boxplus(&(delta * s))
    }

    pub fn angle_to(&self, other: &Rotation<T>) -> T {
        self.inverse().compose(other).angle()
    }

    pub fn cast<U: Real>(&self) -> Rotation<U> {
        let [w, x, y, z] = self.wxyz();
        Rotation::canonical(Quaternion::new(
            U::lit(w.as_f64()),
            U::lit(x.as_f64()),
            U::lit(y.as_f64()),
            U::lit(z.as_f64()),
        ))
    }
}

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(T::zero(), -v.z, v.y, v.z, T::zero(), -v.x, -v.y, v.x, T::zero())
}

/// Exponential map from a rotation vector.
pub fn so3_exp<T: Real>(omega: &Vector3<T>) -> Rotation<T> {
    Rotation::exp(omega)
}

/// Logarithm map; errors near a half turn.
pub fn so3_log<T: Real>(r: &Rotation<T>) -> Result<Vector3<T>, GeometryError> {
    r.log()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn exp_of_zero_is_identity() {
        let r = so3_exp(&Vector3::<f64>::zeros());
        assert_eq!(r.wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn quarter_turn_about_z() {
        let r = so3_exp(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let p = r.apply(&Vector3::new(1.0, 0.0, 0.0));
        assert_relative_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn log_exp_round_trip() {
        let w = Vector3::new(0.1, 0.2, 0.3);
        let back = so3_log(&so3_exp(&w)).unwrap();
        assert_relative_eq!(back, w, epsilon = 1e-12);
        let tiny = Vector3::new(1e-10, -2e-10, 3e-11);
        assert_relative_eq!(so3_log(&so3_exp(&tiny)).unwrap(), tiny, epsilon = 1e-20);
    }

    #[test]
    fn log_rejects_half_turn() {
        let r = so3_exp(&Vector3::new(PI, 0.0, 0.0));
        assert!(matches!(so3_log(&r), Err(GeometryError::RotationAtPi { .. })));
        let r = so3_exp(&Vector3::new(0.0, PI - 1e-3, 0.0));
        assert!(so3_log(&r).is_ok());
    }

    #[test]
    fn canonical_hemisphere() {
        let r = Rotation::from_wxyz(-1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(r.wxyz()[0], 1.0);
        let r = so3_exp(&Vector3::new(0.0, 0.0, 1.5 * PI));
        assert!(r.wxyz()[0] >= 0.0);
        assert!(Rotation::<f64>::from_wxyz(0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn slerp_midpoint() {
        let a = Rotation::<f64>::identity();
        let b = Rotation::yaw(FRAC_PI_2);
        let mid = a.slerp(&b, 0.5);
        assert!(mid.angle_to(&Rotation::yaw(FRAC_PI_2 / 2.0)) < 1e-9);
    }

    #[test]
    fn single_precision_works() {
        let r = so3_exp(&Vector3::new(0.0f32, 0.0, 0.5));
        let back = so3_log(&r).unwrap();
        assert!((back.z - 0.5).abs() < 1e-6);
    }
}
