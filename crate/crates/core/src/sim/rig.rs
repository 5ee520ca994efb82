use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::scene::Scene;
use super::trajectory::Trajectory;
use crate::geometry::{ImuSample, RigidTransform, Timestamp};
use crate::sweep::{LidarPoint, RawSweep};
use crate::vision::{pinhole, world_to_camera, CameraParams, Distortion, ImageFrame, Intrinsics, TrackedFeature, MIN_DEPTH};

/// Spinning multi-beam LiDAR. Each sweep fires `azimuth_steps` columns of `rings` beams,
/// one point at a time at uniform spacing over the sweep period.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarModel {
    pub sweep_hz: f64,
    pub rings: usize,
    pub azimuth_steps: usize,
    /// Radians.
    pub min_elevation: f64,
    pub max_elevation: f64,
    pub max_range: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self {
            sweep_hz: 10.0,
            rings: 16,
            azimuth_steps: 720,
            min_elevation: (-15f64).to_radians(),
            max_elevation: 15f64.to_radians(),
            max_range: 60.0,
        }
    }
}

impl LidarModel {
    pub fn points_per_sweep(&self) -> usize {
        self.rings * self.azimuth_steps
    }

    /// Beam direction of point `j` of a sweep, in the LiDAR frame.
    pub fn direction(&self, j: usize) -> Vector3<f64> {
        let (col, ring) = (j / self.rings, j % self.rings);
        let az = 2.0 * std::f64::consts::PI * col as f64 / self.azimuth_steps as f64;
        let el = if self.rings == 1 {
            0.5 * (self.min_elevation + self.max_elevation)
        } else {
            self.min_elevation + (self.max_elevation - self.min_elevation) * ring as f64 / (self.rings - 1) as f64
        };
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub hz: f64,
    pub width: usize,
    pub height: usize,
    /// 1 for gray, 3 for RGB.
    pub channels: usize,
    pub intrinsics: Intrinsics<f64>,
    pub distortion: Distortion,
    /// Capture time on the IMU clock minus the image stamp, seconds.
    pub time_offset: f64,
    /// camera -> IMU
    pub camera_to_imu: RigidTransform<f64>,
}

impl CameraModel {
    pub fn params(&self) -> CameraParams<f64> {
        CameraParams::new(self.time_offset, self.camera_to_imu, self.intrinsics)
    }
}

/// Sensor noise. Densities are continuous-time; zero disables a term.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct NoiseModel {
    pub gyro_density: f64,
    pub accel_density: f64,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    /// Meters, along the beam.
    pub range_sigma: f64,
    /// Intensity levels.
    pub pixel_sigma: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensorRig {
    pub imu_hz: f64,
    /// LiDAR -> IMU
    pub lidar_to_imu: RigidTransform<f64>,
    pub lidar: LidarModel,
    pub camera: Option<CameraModel>,
    pub noise: NoiseModel,
}

fn gaussian(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

fn noise3<R: Rng>(d: &Option<Normal<f64>>, rng: &mut R) -> Vector3<f64> {
    match d {
        Some(n) => Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng)),
        None => Vector3::zeros(),
    }
}

/// Integer tick range `[ceil(start·hz), floor(end·hz)]`, tolerant to rounding.
fn ticks(start: f64, end: f64, hz: f64) -> std::ops::RangeInclusive<i64> {
    let first = (start * hz - 1e-9).ceil() as i64;
    let last = (end * hz + 1e-9).floor() as i64;
    first..=last
}

/// IMU readings at `i / imu_hz` over the trajectory span: body rates and specific force
/// from the analytic derivatives, plus constant biases and white noise.
pub fn sample_imu<R: Rng>(traj: &Trajectory, rig: &SensorRig, gravity: &Vector3<f64>, rng: &mut R) -> Vec<ImuSample<f64>> {
    let n = &rig.noise;
    let gyro = gaussian(n.gyro_density * rig.imu_hz.sqrt());
    let accel = gaussian(n.accel_density * rig.imu_hz.sqrt());
    ticks(traj.start(), traj.end(), rig.imu_hz)
        .map(|i| {
            let t = i as f64 / rig.imu_hz;
            let k = traj.kinematics(t);
            let force = k.pose.rotation.apply_inverse(&(k.acceleration - gravity));
            ImuSample::new(
                Timestamp(t),
                k.angular_velocity + n.gyro_bias + noise3(&gyro, rng),
                force + n.accel_bias + noise3(&accel, rng),
            )
        })
        .collect()
}

/// Indices `k` of the full sweeps `[k/f, (k+1)/f)` inside the trajectory span.
pub fn sweep_indices(traj: &Trajectory, lidar: &LidarModel) -> std::ops::Range<i64> {
    let r = ticks(traj.start(), traj.end(), lidar.sweep_hz);
    *r.start()..*r.end()
}

/// Sweep `k`. Each point is cast from the true LiDAR pose at its own stamp and expressed in
/// that instantaneous frame, so motion distortion is present. Rays that hit nothing
/// produce no point.
pub fn sample_sweep<R: Rng>(traj: &Trajectory, rig: &SensorRig, scene: &Scene, k: i64, rng: &mut R) -> RawSweep {
    let l = &rig.lidar;
    let n = l.points_per_sweep();
    let range_noise = gaussian(rig.noise.range_sigma);
    let mut points = Vec::with_capacity(if scene.is_empty() { 0 } else { n });
    if !scene.is_empty() {
        for j in 0..n {
            let dir = l.direction(j);
            let stamp = (k as f64 * n as f64 + j as f64) / (n as f64 * l.sweep_hz);
            let pose = traj.pose(stamp).compose(&rig.lidar_to_imu);
            let world_dir = pose.rotation.apply(&dir);
            let Some(hit) = scene.raycast(&pose.translation, &world_dir, l.max_range) else { continue };
            let range = hit.distance + range_noise.map_or(0.0, |d| d.sample(rng));
            let intensity = hit.color.mean() / 255.0;
            points.push(LidarPoint::new(dir * range, Timestamp(stamp), intensity));
        }
    }
    RawSweep { points, begin: Timestamp(k as f64 / l.sweep_hz), end: Timestamp((k + 1) as f64 / l.sweep_hz) }
}

/// Every full sweep inside the trajectory span.
pub fn sample_lidar<R: Rng>(traj: &Trajectory, rig: &SensorRig, scene: &Scene, rng: &mut R) -> Vec<RawSweep> {
    sweep_indices(traj, &rig.lidar).map(|k| sample_sweep(traj, rig, scene, k, rng)).collect()
}

/// Stamp of frame `i` on the camera clock.
pub fn camera_stamp(cam: &CameraModel, i: i64) -> f64 {
    i as f64 / cam.hz
}

/// Renders one frame captured at IMU-clock time `capture`, stamped `stamp`.
pub fn render_frame<R: Rng>(traj: &Trajectory, cam: &CameraModel, scene: &Scene, capture: f64, stamp: f64, pixel_sigma: f64, rng: &mut R) -> ImageFrame {
    let pose = traj.pose(capture).compose(&cam.camera_to_imu);
    let noise = gaussian(pixel_sigma);
    let Intrinsics { fx, fy, cx, cy } = cam.intrinsics;
    let undistort = !cam.distortion.is_zero();
    let mut data = Vec::with_capacity(cam.width * cam.height * cam.channels);
    for v in 0..cam.height {
        for u in 0..cam.width {
            let (mut x, mut y) = ((u as f64 - cx) / fx, (v as f64 - cy) / fy);
            if undistort {
                (x, y) = cam.distortion.undistort(x, y);
            }
            let dir = pose.rotation.apply(&Vector3::new(x, y, 1.0).normalize());
            let color = scene.raycast(&pose.translation, &dir, f64::INFINITY).map_or(Vector3::zeros(), |h| h.color);
            let mut push = |value: f64| {
                let n = noise.map_or(0.0, |d| d.sample(rng));
                data.push((value + n).clamp(0.0, 255.0) as f32);
            };
            if cam.channels == 1 {
                push(0.299 * color.x + 0.587 * color.y + 0.114 * color.z);
            } else {
                push(color.x);
                push(color.y);
                push(color.z);
            }
        }
    }
    ImageFrame::new(Timestamp(stamp), cam.width, cam.height, cam.channels, data)
}

/// Indices of the frames whose capture instant `stamp + time_offset` lies inside the
/// trajectory span.
pub fn frame_indices(traj: &Trajectory, cam: &CameraModel) -> std::ops::RangeInclusive<i64> {
    ticks(traj.start() - cam.time_offset, traj.end() - cam.time_offset, cam.hz)
}

/// Every frame of [`frame_indices`].
pub fn sample_camera<R: Rng>(traj: &Trajectory, rig: &SensorRig, scene: &Scene, rng: &mut R) -> Vec<ImageFrame> {
    let Some(cam) = rig.camera else { return Vec::new() };
    frame_indices(traj, &cam)
        .map(|i| {
            let stamp = camera_stamp(&cam, i);
            render_frame(traj, &cam, scene, stamp + cam.time_offset, stamp, rig.noise.pixel_sigma, rng)
        })
        .collect()
}

/// Noiseless pixel of a world point for an image stamped `stamp`, or `None` when it is
/// behind the camera or outside the frame by less than `border` pixels.
pub fn oracle_pixel(p: &Vector3<f64>, traj: &Trajectory, cam: &CameraModel, stamp: f64, border: f64) -> Option<Vector2<f64>> {
    let params = cam.params();
    let pc = world_to_camera(p, &traj.pose(stamp + cam.time_offset), &params);
    if pc.z <= MIN_DEPTH {
        return None;
    }
    let px = pinhole(&pc, &params.intrinsics);
    let (w, h) = (cam.width as f64, cam.height as f64);
    (px.x >= border && px.y >= border && px.x <= w - 1.0 - border && px.y <= h - 1.0 - border).then_some(px)
}

/// Exact correspondences of `points` between the images stamped `prev` and `cur`, using
/// the true camera parameters. Points not visible in both frames are left out.
pub fn oracle_correspondences(points: &[(u64, Vector3<f64>)], traj: &Trajectory, cam: &CameraModel, prev: f64, cur: f64) -> Vec<TrackedFeature<f64>> {
    points
        .iter()
        .filter_map(|(id, p)| {
            let a = oracle_pixel(p, traj, cam, prev, 3.0)?;
            let b = oracle_pixel(p, traj, cam, cur, 3.0)?;
            Some(TrackedFeature { point_id: *id, position: *p, prev_pixel: a, cur_pixel: b, valid: true })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{integrate_imu, MotionState, Rotation};
    use crate::sim::scene::{Patch, Texture};
    use crate::sim::trajectory::Orbit;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rig() -> SensorRig {
        SensorRig {
            imu_hz: 200.0,
            lidar_to_imu: RigidTransform::identity(),
            lidar: LidarModel { rings: 4, azimuth_steps: 90, ..LidarModel::default() },
            camera: Some(CameraModel {
                hz: 10.0,
                width: 64,
                height: 48,
                channels: 1,
                intrinsics: Intrinsics::new(50.0, 50.0, 32.0, 24.0),
                distortion: Distortion::default(),
                time_offset: 0.0,
                camera_to_imu: RigidTransform::identity(),
            }),
            noise: NoiseModel::default(),
        }
    }

    fn still(pose: RigidTransform<f64>, duration: f64) -> Trajectory {
        Trajectory::keyframes(vec![(0.0, pose), (duration, pose)]).unwrap()
    }

    fn g() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -9.81)
    }

    #[test]
    fn stationary_imu_measures_gravity() {
        let pose = RigidTransform::new(Rotation::exp(&Vector3::new(0.2, -0.1, 0.5)), Vector3::zeros());
        let imu = sample_imu(&still(pose, 1.0), &rig(), &g(), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(imu.len(), 201);
        for s in &imu {
            assert_eq!(s.angular_velocity, Vector3::zeros());
            assert!((s.linear_acceleration - pose.rotation.apply_inverse(&-g())).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_velocity_has_no_proper_acceleration() {
        let a = RigidTransform::from_rotation(Rotation::yaw(0.3));
        let b = RigidTransform::new(Rotation::yaw(0.3), Vector3::new(5.0, 1.0, 0.0));
        let traj = Trajectory::keyframes(vec![(0.0, a), (5.0, b)]).unwrap();
        let imu = sample_imu(&traj, &rig(), &g(), &mut ChaCha8Rng::seed_from_u64(0));
        for s in &imu[1..imu.len() - 1] {
            assert!((s.linear_acceleration - a.rotation.apply_inverse(&-g())).norm() < 1e-12);
        }
    }

    #[test]
    fn circle_has_constant_yaw_rate() {
        let traj = Trajectory::orbit(Orbit { laps: 1.0, roll_amplitude: 0.0, pitch_amplitude: 0.0, height_amplitude: 0.0, ..Orbit::default() }).unwrap();
        let imu = sample_imu(&traj, &rig(), &g(), &mut ChaCha8Rng::seed_from_u64(0));
        for s in imu.iter().step_by(50) {
            let t = s.stamp.secs();
            let rate = 2.0 * std::f64::consts::PI / 30.0 * (1.0 - (2.0 * std::f64::consts::PI * t / 30.0).cos());
            assert!((s.angular_velocity.z - rate).abs() < 1e-6);
            assert!(s.angular_velocity.xy().norm() < 1e-12);
        }
    }

    #[test]
    fn imu_integrates_back_to_trajectory() {
        let orbit = Orbit { radius: 1.0, duration: 10.0, height_amplitude: 0.1, roll_amplitude: 0.03, pitch_amplitude: 0.03, ..Orbit::default() };
        let traj = Trajectory::orbit(orbit).unwrap();
        let rig = SensorRig { imu_hz: 400.0, ..rig() };
        let imu = sample_imu(&traj, &rig, &g(), &mut ChaCha8Rng::seed_from_u64(0));
        let k0 = traj.kinematics(0.0);
        let start = MotionState { pose: k0.pose, velocity: k0.velocity, ..MotionState::at_rest(Timestamp(0.0)) };
        let end = integrate_imu(&start, &imu, &g());
        let truth = traj.pose(10.0);
        assert!((end.pose.translation - truth.translation).norm() < 1e-4, "{}", (end.pose.translation - truth.translation).norm());
        assert!(end.pose.rotation.angle_to(&truth.rotation) < 1e-4);
    }

    fn wall(depth: f64) -> Scene {
        Scene { patches: vec![Patch::new(Vector3::new(depth, 0.0, 0.0), -Vector3::x(), Vector3::y(), (100.0, 100.0), Texture::gray(100.0)).unwrap()], boxes: vec![] }
    }

    #[test]
    fn stationary_lidar_ranges() {
        let mut r = rig();
        r.lidar = LidarModel { rings: 1, azimuth_steps: 36, min_elevation: 0.0, max_elevation: 0.0, ..LidarModel::default() };
        let sweeps = sample_lidar(&still(RigidTransform::identity(), 0.2), &r, &wall(5.0), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(sweeps.len(), 2);
        let forward: Vec<_> = sweeps[0].points.iter().filter(|p| p.position.y.abs() < 1e-9).collect();
        assert_eq!(forward.len(), 1);
        assert!((forward[0].position.x - 5.0).abs() < 1e-9);
        // stamps are uniform over the sweep period
        assert_eq!(sweeps[1].points[0].stamp, Timestamp(0.1));
        assert!(sample_lidar(&still(RigidTransform::identity(), 0.2), &r, &Scene::default(), &mut ChaCha8Rng::seed_from_u64(0)).iter().all(|s| s.points.is_empty()));
    }

    #[test]
    fn uniform_plane_gives_constant_image() {
        let facing = RigidTransform::from_rotation(Rotation::from_matrix(&nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0)));
        let frames = sample_camera(&still(facing, 0.3), &rig(), &wall(3.0), &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(frames.len(), 4);
        assert!(frames.iter().all(|f| f.data.iter().all(|&p| (p - 100.0).abs() < 1e-3)));
    }

    #[test]
    fn checker_corner_lands_where_projected() {
        // camera at the origin looking down +z at a checker plane 4 m away
        let scene = Scene {
            patches: vec![Patch::new(Vector3::new(0.0, 0.0, 4.0), -Vector3::z(), Vector3::x(), (10.0, 10.0), Texture::Checker { a: Vector3::repeat(0.0), b: Vector3::repeat(255.0), size: 1.0 }).unwrap()],
            boxes: vec![],
        };
        let cam = rig().camera.unwrap();
        let img = render_frame(&still(RigidTransform::identity(), 1.0), &cam, &scene, 0.0, 0.0, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        // texture u runs along world x, so a checker edge passes through world (1, 1, 4)
        let corner = Vector3::new(1.0, 1.0, 4.0);
        let px = pinhole(&corner, &cam.intrinsics);
        let row = px.y.round() as usize + 2;
        let transitions: Vec<usize> = (1..cam.width).filter(|&u| img.at(u, row, 0) != img.at(u - 1, row, 0)).collect();
        assert!(transitions.iter().any(|&u| (u as f64 - 0.5 - px.x).abs() <= 1.0), "{transitions:?} vs {}", px.x);
    }

    #[test]
    fn oracle_disparity_and_exclusion() {
        let mut r = rig();
        let cam = r.camera.as_mut().unwrap();
        cam.width = 1000;
        cam.height = 1000;
        cam.intrinsics = Intrinsics::new(400.0, 400.0, 500.0, 500.0);
        let cam = *cam;
        let traj = Trajectory::keyframes(vec![(0.0, RigidTransform::identity()), (1.0, RigidTransform::from_translation(Vector3::new(0.5, 0.0, 0.0)))]).unwrap();
        let pts = vec![(7, Vector3::new(0.0, 0.0, 5.0)), (8, Vector3::new(0.0, 0.0, -5.0))];
        let f = oracle_correspondences(&pts, &traj, &cam, 0.0, 1.0);
        assert_eq!(f.len(), 1);
        assert!((f[0].prev_pixel.x - f[0].cur_pixel.x - 400.0 * 0.5 / 5.0).abs() < 1e-9);
        let static_f = oracle_correspondences(&pts, &still(RigidTransform::identity(), 1.0), &cam, 0.0, 1.0);
        assert_eq!(static_f[0].prev_pixel, static_f[0].cur_pixel);
    }
}
