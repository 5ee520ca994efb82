use nalgebra::{Matrix2x3, Matrix3, SMatrix, SVector, Vector2, Vector3};

use super::VisionError;
use crate::geometry::{skew, RigidTransform};
use crate::scalar::Real;

/// Dimension of the camera error state.
pub const CAM_DIM: usize = 11;
/// Offsets into the camera error state `(δt_off, δθ, δt, δφ)`.
pub const T_OFF: usize = 0;
pub const EXT_ROT: usize = 1;
pub const EXT_POS: usize = 4;
pub const INTR: usize = 7;

pub type CameraErrorState<T> = SVector<T, CAM_DIM>;
pub type CameraCovariance<T> = SMatrix<T, CAM_DIM, CAM_DIM>;
/// Jacobian of a 2-D residual with respect to the camera error state.
pub type PixelJacobian<T> = SMatrix<T, 2, CAM_DIM>;

/// Pin-hole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Self {
        Self { fx, fy, cx, cy }
    }

    pub fn as_vector(&self) -> SVector<T, 4> {
        SVector::<T, 4>::new(self.fx, self.fy, self.cx, self.cy)
    }

    pub fn from_vector(v: &SVector<T, 4>) -> Self {
        Self { fx: v[0], fy: v[1], cx: v[2], cy: v[3] }
    }
}

/// Parameters refined by the vision filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraParams<T: Real> {
    /// Seconds to add to an image stamp to get its capture time on the IMU clock.
    pub time_offset: T,
    /// camera -> IMU
    pub extrinsic: RigidTransform<T>,
    pub intrinsics: Intrinsics<T>,
}

impl<T: Real> CameraParams<T> {
    pub fn new(time_offset: T, extrinsic: RigidTransform<T>, intrinsics: Intrinsics<T>) -> Self {
        Self { time_offset, extrinsic, intrinsics }
    }

    /// `self ⊞ δ` with a right-perturbed extrinsic rotation.
    pub fn boxplus(&self, delta: &CameraErrorState<T>) -> Self {
        let rot = self.extrinsic.rotation.boxplus(&delta.fixed_rows::<3>(EXT_ROT).into_owned());
        let pos = self.extrinsic.translation + delta.fixed_rows::<3>(EXT_POS);
        let intr = self.intrinsics.as_vector() + delta.fixed_rows::<4>(INTR);
        Self {
            time_offset: self.time_offset + delta[T_OFF],
            extrinsic: RigidTransform::new(rot, pos),
            intrinsics: Intrinsics::from_vector(&intr),
        }
    }

    /// `self ⊟ other`.
    pub fn boxminus(&self, other: &Self) -> CameraErrorState<T> {
        let mut d = CameraErrorState::zeros();
        d[T_OFF] = self.time_offset - other.time_offset;
        d.fixed_rows_mut::<3>(EXT_ROT).copy_from(&self.extrinsic.rotation.boxminus(&other.extrinsic.rotation));
        d.fixed_rows_mut::<3>(EXT_POS).copy_from(&(self.extrinsic.translation - other.extrinsic.translation));
        d.fixed_rows_mut::<4>(INTR).copy_from(&(self.intrinsics.as_vector() - other.intrinsics.as_vector()));
        d
    }

    pub fn cast<U: Real>(&self) -> CameraParams<U> {
        let i = &self.intrinsics;
        CameraParams {
            time_offset: U::lit(self.time_offset.as_f64()),
            extrinsic: self.extrinsic.cast(),
            intrinsics: Intrinsics::new(
                U::lit(i.fx.as_f64()),
                U::lit(i.fy.as_f64()),
                U::lit(i.cx.as_f64()),
                U::lit(i.cy.as_f64()),
            ),
        }
    }
}

/// World point into the camera frame at image k:
/// `p_c = (R_wo R_oc)^T p_w - R_oc^T t_oc - (R_wo R_oc)^T t_wo`.
pub fn world_to_camera<T: Real>(
    p_w: &Vector3<T>,
    nav_pose: &RigidTransform<T>,
    params: &CameraParams<T>,
) -> Vector3<T> {
    let r_wo = nav_pose.rotation.matrix();
    let r_oc = params.extrinsic.rotation.matrix();
    let r_wc_t: Matrix3<T> = (r_wo * r_oc).transpose();
    r_wc_t * p_w - r_oc.transpose() * params.extrinsic.translation - r_wc_t * nav_pose.translation
}

/// Pin-hole term of the projection.
#[inline]
pub fn pinhole<T: Real>(p_c: &Vector3<T>, intr: &Intrinsics<T>) -> Vector2<T> {
    Vector2::new(intr.fx * p_c.x / p_c.z + intr.cx, intr.fy * p_c.y / p_c.z + intr.cy)
}

/// Minimum depth accepted by [`project`], meters.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pin-hole projection plus the temporal correction `(t_off / dt) · flow_delta`.
pub fn project<T: Real>(
    p_c: &Vector3<T>,
    params: &CameraParams<T>,
    flow_delta: &Vector2<T>,
    dt: T,
) -> Result<Vector2<T>, VisionError> {
    if !(p_c.z > T::lit(MIN_DEPTH)) {
        return Err(VisionError::BehindCamera { depth: p_c.z.as_f64() });
    }
    Ok(pinhole(p_c, &params.intrinsics) + temporal_correction(params.time_offset, flow_delta, dt))
}

#[inline]
fn temporal_correction<T: Real>(time_offset: T, flow_delta: &Vector2<T>, dt: T) -> Vector2<T> {
    if dt > T::zero() {
        flow_delta * (time_offset / dt)
    } else {
        Vector2::zeros()
    }
}

/// Derivative of the projection with respect to the camera error state, evaluated at
/// camera-frame point `p_c`.
pub fn projection_jacobian<T: Real>(
    p_c: &Vector3<T>,
    params: &CameraParams<T>,
    flow_delta: &Vector2<T>,
    dt: T,
) -> PixelJacobian<T> {
    let intr = &params.intrinsics;
    let (x, y, z) = (p_c.x, p_c.y, p_c.z);
    let iz = T::one() / z;
    let d_pix_d_pc = Matrix2x3::new(
        intr.fx * iz, T::zero(), -intr.fx * x * iz * iz,
        T::zero(), intr.fy * iz, -intr.fy * y * iz * iz,
    );
    let r_oc_t = params.extrinsic.rotation.matrix().transpose();
    let mut j = PixelJacobian::zeros();
    if dt > T::zero() {
        j.fixed_view_mut::<2, 1>(0, T_OFF).copy_from(&(flow_delta / dt));
    }
    // p_c(δθ) = exp(-δθ) p_c  =>  ∂p_c/∂δθ = [p_c]x
    j.fixed_view_mut::<2, 3>(0, EXT_ROT).copy_from(&(d_pix_d_pc * skew(p_c)));
    j.fixed_view_mut::<2, 3>(0, EXT_POS).copy_from(&(d_pix_d_pc * (-r_oc_t)));
    j[(0, INTR)] = x * iz;
    j[(1, INTR + 1)] = y * iz;
    j[(0, INTR + 2)] = T::one();
    j[(1, INTR + 3)] = T::one();
    j
}

/// Re-projection residual `ρ_k - π(p_c, x)` of one tracked map point and its Jacobian
/// with respect to the camera error state.
pub fn reprojection_residual<T: Real>(
    p_w: &Vector3<T>,
    prev_pixel: &Vector2<T>,
    cur_pixel: &Vector2<T>,
    nav_pose: &RigidTransform<T>,
    params: &CameraParams<T>,
    dt: T,
) -> Result<(Vector2<T>, PixelJacobian<T>), VisionError> {
    let p_c = world_to_camera(p_w, nav_pose, params);
    let flow = cur_pixel - prev_pixel;
    let predicted = project(&p_c, params, &flow, dt)?;
    Ok((cur_pixel - predicted, -projection_jacobian(&p_c, params, &flow, dt)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Rotation;
    use approx::assert_relative_eq;

    fn unit() -> CameraParams<f64> {
        CameraParams::new(0.0, RigidTransform::identity(), Intrinsics::new(1.0, 1.0, 0.0, 0.0))
    }

    #[test]
    fn identity_chain_is_identity() {
        let p = Vector3::new(0.3, -1.0, 4.0);
        assert_eq!(world_to_camera(&p, &RigidTransform::identity(), &unit()), p);
    }

    #[test]
    fn nav_translation_by_hand() {
        let nav = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let p = world_to_camera(&Vector3::new(1.0, 0.0, 5.0), &nav, &unit());
        assert_relative_eq!(p, Vector3::new(0.0, 0.0, 5.0), epsilon = 1e-15);
    }

    #[test]
    fn equals_inverse_compose_path() {
        let nav = RigidTransform::new(Rotation::exp(&Vector3::new(0.3, -0.7, 1.2)), Vector3::new(4.0, -2.0, 1.0));
        let ext = RigidTransform::new(Rotation::exp(&Vector3::new(-1.4, 0.2, 0.5)), Vector3::new(0.1, 0.05, -0.2));
        let params = CameraParams::new(0.0, ext, Intrinsics::new(400.0, 410.0, 320.0, 240.0));
        let p = Vector3::new(7.0, 3.0, -2.0);
        let expected = nav.compose(&ext).inverse().apply(&p);
        assert_relative_eq!(world_to_camera(&p, &nav, &params), expected, epsilon = 1e-9);
    }

    #[test]
    fn projection_examples() {
        let p = project(&Vector3::new(0.0, 0.0, 1.0), &unit(), &Vector2::zeros(), 0.1).unwrap();
        assert_eq!(p, Vector2::new(0.0, 0.0));

        let cam = CameraParams::new(0.0, RigidTransform::identity(), Intrinsics::new(400.0, 400.0, 320.0, 240.0));
        let p = project(&Vector3::new(1.0, 2.0, 2.0), &cam, &Vector2::zeros(), 0.1).unwrap();
        assert_relative_eq!(p, Vector2::new(520.0, 640.0), epsilon = 1e-12);

        let mut timed = unit();
        timed.time_offset = 0.01;
        let p = project(&Vector3::new(0.0, 0.0, 1.0), &timed, &Vector2::new(10.0, 0.0), 0.1).unwrap();
        assert_relative_eq!(p, Vector2::new(1.0, 0.0), epsilon = 1e-12);

        assert!(matches!(
            project(&Vector3::new(0.0, 0.0, 1e-7), &unit(), &Vector2::zeros(), 0.1),
            Err(VisionError::BehindCamera { .. })
        ));
    }

    #[test]
    fn boxplus_boxminus_round_trip() {
        let a = CameraParams::new(
            0.003,
            RigidTransform::new(Rotation::exp(&Vector3::new(0.1, 0.2, -0.3)), Vector3::new(0.1, 0.0, 0.2)),
            Intrinsics::new(400.0, 390.0, 320.0, 240.0),
        );
        let d = CameraErrorState::<f64>::from_iterator((0..CAM_DIM).map(|i| (i as f64 + 1.0) * 1e-3));
        let b = a.boxplus(&d);
        assert_relative_eq!(b.boxminus(&a), d, epsilon = 1e-12);
    }
}
