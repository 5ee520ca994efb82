use nalgebra::{SMatrix, SVector, Vector2, Vector3};

use super::camera::{
    pinhole, projection_jacobian, project, reprojection_residual, world_to_camera, CameraCovariance,
    CameraErrorState, CameraParams, CAM_DIM, MIN_DEPTH,
};
use super::image::IntensityField;
use super::track::TrackedFeature;
use crate::geometry::RigidTransform;
use crate::scalar::Real;

/// Tuning of the camera-parameter filter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VisionConfig {
    /// Pixel noise of tracked features.
    pub sigma_pnp: f64,
    /// Huber threshold on the feature residual norm, pixels.
    pub huber_pnp: f64,
    /// Intensity noise per channel.
    pub sigma_photo: f64,
    /// Huber threshold on the photometric residual norm, intensity levels.
    pub huber_photo: f64,
    pub max_iterations: usize,
    /// Stop iterating once the step norm drops below this.
    pub convergence: f64,
    pub min_features: usize,
    /// Bound on |time_offset|, seconds.
    pub time_offset_bound: f64,
}

impl Default for VisionConfig {
    fn default() -> Self {
        Self {
            sigma_pnp: 1.5,
            huber_pnp: 3.0,
            sigma_photo: 8.0,
            huber_photo: 30.0,
            max_iterations: 5,
            convergence: 1e-8,
            min_features: 4,
            time_offset_bound: 0.05,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateStatus {
    /// Too few usable measurements; parameters and covariance untouched.
    Skipped { usable: usize },
    Updated {
        iterations: usize,
        /// Scalar residual rows in the final linearization.
        rows: usize,
        /// Norm of the last iteration step.
        last_step: f64,
    },
}

impl UpdateStatus {
    pub fn is_updated(&self) -> bool {
        matches!(self, UpdateStatus::Updated { .. })
    }
}

/// A rendered map point used by the photometric update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhotometricPoint<T: Real> {
    pub position: Vector3<T>,
    /// Stored color; gray fields use the first channel.
    pub color: Vector3<T>,
    /// Projection in the previous image, when there was one.
    pub prev_pixel: Option<Vector2<T>>,
}

/// Photometric residual `γ - I(π(p_c, x))` and its Jacobian, first `field.channels()`
/// rows valid. `None` when the point is behind the camera or outside the field.
pub fn photometric_residual<T: Real, F: IntensityField + ?Sized>(
    position: &Vector3<T>,
    color: &Vector3<T>,
    flow: &Vector2<T>,
    field: &F,
    nav_pose: &RigidTransform<T>,
    params: &CameraParams<T>,
    dt: T,
) -> Option<(Vector3<T>, SMatrix<T, 3, CAM_DIM>)> {
    let p_c = world_to_camera(position, nav_pose, params);
    let px = project(&p_c, params, flow, dt).ok()?;
    let (u, v) = (px.x.as_f64(), px.y.as_f64());
    if !field.samplable(u, v) {
        return None;
    }
    let intensity = field.sample(u, v);
    let grad = field.gradient(u, v);
    let dpi = projection_jacobian(&p_c, params, flow, dt);
    let mut r = Vector3::zeros();
    let mut j = SMatrix::<T, 3, CAM_DIM>::zeros();
    for c in 0..field.channels() {
        r[c] = color[c] - T::lit(intensity[c]);
        let row = dpi.row(0) * T::lit(-grad[c][0]) + dpi.row(1) * T::lit(-grad[c][1]);
        j.set_row(c, &row);
    }
    Some((r, j))
}

/// Accumulated `HᵀWH` and `HᵀWr` of one linearization.
struct Normal<T: Real> {
    info: CameraCovariance<T>,
    grad: CameraErrorState<T>,
    rows: usize,
}

impl<T: Real> Normal<T> {
    fn new() -> Self {
        Self { info: CameraCovariance::zeros(), grad: CameraErrorState::zeros(), rows: 0 }
    }

    /// Adds the first `n` rows of a residual block with noise `sigma` and Huber threshold
    /// `huber` on the block norm.
    fn add<const R: usize>(&mut self, r: &SVector<T, R>, j: &SMatrix<T, R, CAM_DIM>, n: usize, sigma: f64, huber: f64) {
        let norm = r.rows(0, n).norm().as_f64();
        let weight = if norm <= huber { 1.0 } else { huber / norm };
        let w = T::lit(weight / (sigma * sigma));
        for i in 0..n {
            let row = j.row(i);
            self.info += row.transpose() * row * w;
            self.grad += row.transpose() * (r[i] * w);
        }
        self.rows += n;
    }
}

/// Error-state iterated Kalman filter over [`CameraParams`].
///
/// The vision filter never touches the navigation state: every update takes the
/// world←IMU pose by shared reference.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraFilter<T: Real> {
    params: CameraParams<T>,
    covariance: CameraCovariance<T>,
    error_state: CameraErrorState<T>,
    config: VisionConfig,
}

impl<T: Real> CameraFilter<T> {
    pub fn new(params: CameraParams<T>, covariance: CameraCovariance<T>, config: VisionConfig) -> Self {
        Self { params, covariance, error_state: CameraErrorState::zeros(), config }
    }

    pub fn params(&self) -> &CameraParams<T> {
        &self.params
    }

    pub fn covariance(&self) -> &CameraCovariance<T> {
        &self.covariance
    }

    pub fn error_state(&self) -> &CameraErrorState<T> {
        &self.error_state
    }

    pub fn config(&self) -> &VisionConfig {
        &self.config
    }

    /// Parameters are constant between images: the mean carries over, the error state is
    /// zero and the covariance is left exactly as it was.
    pub fn predict(&mut self) {
        self.error_state = CameraErrorState::zeros();
    }

    /// Update from feature re-projection errors. Invalid features are ignored.
    pub fn pnp_update(&mut self, features: &[TrackedFeature<T>], nav_pose: &RigidTransform<T>, dt: T) -> UpdateStatus {
        let usable = features.iter().filter(|f| f.valid).count();
        if usable < self.config.min_features {
            log::debug!("pnp update skipped: {usable} valid features");
            return UpdateStatus::Skipped { usable };
        }
        let cfg = self.config;
        self.iterated_update(|x| {
            let mut ne = Normal::new();
            for f in features.iter().filter(|f| f.valid) {
                if let Ok((r, j)) = reprojection_residual(&f.position, &f.prev_pixel, &f.cur_pixel, nav_pose, x, dt) {
                    ne.add(&r, &j, 2, cfg.sigma_pnp, cfg.huber_pnp);
                }
            }
            ne
        })
    }

    /// Update from the intensity differences between stored point colors and `field`.
    ///
    /// Each point's flow is its projection under the current parameters minus its
    /// previous projection, frozen for the duration of the update.
    pub fn photometric_update<F: IntensityField + ?Sized>(
        &mut self,
        points: &[PhotometricPoint<T>],
        field: &F,
        nav_pose: &RigidTransform<T>,
        dt: T,
    ) -> UpdateStatus {
        let flows: Vec<Vector2<T>> = points
            .iter()
            .map(|p| {
                let pc = world_to_camera(&p.position, nav_pose, &self.params);
                match p.prev_pixel {
                    Some(prev) if pc.z > T::lit(MIN_DEPTH) => pinhole(&pc, &self.params.intrinsics) - prev,
                    _ => Vector2::zeros(),
                }
            })
            .collect();
        let cfg = self.config;
        let channels = field.channels();
        self.iterated_update(|x| {
            let mut ne = Normal::new();
            for (p, flow) in points.iter().zip(&flows) {
                if let Some((r, j)) = photometric_residual(&p.position, &p.color, flow, field, nav_pose, x, dt) {
                    ne.add(&r, &j, channels, cfg.sigma_photo, cfg.huber_photo);
                }
            }
            ne
        })
    }

    fn iterated_update(&mut self, mut linearize: impl FnMut(&CameraParams<T>) -> Normal<T>) -> UpdateStatus {
        let Some(p_inv) = spd_inverse(&self.covariance) else {
            log::warn!("camera covariance is not invertible, update skipped");
            return UpdateStatus::Skipped { usable: 0 };
        };
        let prior = self.params;
        let mut x = prior;
        let mut last = None;
        let mut status = UpdateStatus::Skipped { usable: 0 };
        for iteration in 0..self.config.max_iterations.max(1) {
            let ne = linearize(&x);
            if ne.rows == 0 {
                break;
            }
            let d = x.boxminus(&prior);
            let Some(s_inv) = spd_inverse(&(p_inv + ne.info)) else { break };
            let delta = -(s_inv * (ne.grad + p_inv * d));
            x = x.boxplus(&delta);
            self.error_state = x.boxminus(&prior);
            let step = delta.norm().as_f64();
            status = UpdateStatus::Updated { iterations: iteration + 1, rows: ne.rows, last_step: step };
            last = Some((s_inv, ne.info));
            if step < self.config.convergence {
                break;
            }
        }
        let Some((s_inv, info)) = last else {
            self.error_state = CameraErrorState::zeros();
            return status;
        };
        // Joseph form with K = S⁻¹HᵀW, where KRKᵀ = S⁻¹(HᵀWH)S⁻¹.
        let a = CameraCovariance::identity() - s_inv * info;
        let p = a * self.covariance * a.transpose() + s_inv * info * s_inv;
        self.covariance = (p + p.transpose()) * T::lit(0.5);
        self.params = self.enforce_invariants(x);
        self.error_state = CameraErrorState::zeros();
        status
    }

    fn enforce_invariants(&self, mut x: CameraParams<T>) -> CameraParams<T> {
        let bound = T::lit(self.config.time_offset_bound);
        if x.time_offset.abs() > bound {
            log::warn!("time offset {} clamped to the configured bound", x.time_offset.as_f64());
            x.time_offset = x.time_offset.clamp(-bound, bound);
        }
        let floor = T::one();
        x.intrinsics.fx = x.intrinsics.fx.max(floor);
        x.intrinsics.fy = x.intrinsics.fy.max(floor);
        x
    }
}

fn spd_inverse<T: Real>(m: &CameraCovariance<T>) -> Option<CameraCovariance<T>> {
    match m.cholesky() {
        Some(c) => Some(c.inverse()),
        None => m.try_inverse(),
    }
}
