//! Deterministic sensor simulator: a textured scene, an analytic ground-truth trajectory and
//! a rig of IMU, spinning LiDAR and camera sampled along it.
//!
//! Every sensor draws noise from its own ChaCha stream (IMU, each sweep, each frame), so any
//! sweep or frame can be regenerated on its own and the output does not depend on the order
//! of generation.

mod rig;
mod scene;
mod trajectory;

pub use rig::{
    camera_stamp, frame_indices, oracle_correspondences, oracle_pixel, render_frame, sample_camera, sample_imu,
    sample_lidar, sample_sweep, sweep_indices, CameraModel, LidarModel, NoiseModel, SensorRig,
};
pub use scene::{AaBox, Hit, Patch, Scene, Texture};
pub use trajectory::{Kinematics, Orbit, Trajectory};

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{ImuSample, RigidTransform, Rotation, Timestamp};
use crate::io::{format_transform, FrameSource, IoError, KeyValues, TrajectoryRecord};
use crate::sweep::{Event, MergedEvents, RawSweep};
use crate::vision::{Distortion, ImageFrame, Intrinsics};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid simulator config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Everything that determines a simulated run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub seed: u64,
    pub gravity: Vector3<f64>,
    pub scene: Scene,
    pub trajectory: Trajectory,
    pub rig: SensorRig,
}

/// Camera looking along the IMU +x axis, image x to the right (IMU −y), image y down (IMU −z).
pub fn forward_camera_rotation() -> Rotation<f64> {
    Rotation::from_matrix(&Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0))
}

impl Default for CameraModel {
    fn default() -> Self {
        Self {
            hz: 15.0,
            width: 320,
            height: 240,
            channels: 1,
            intrinsics: Intrinsics { fx: 300.0, fy: 300.0, cx: 160.0, cy: 120.0 },
            distortion: Distortion::default(),
            time_offset: 0.0,
            camera_to_imu: RigidTransform::new(forward_camera_rotation(), Vector3::new(0.05, 0.02, -0.03)),
        }
    }
}

impl Default for SensorRig {
    fn default() -> Self {
        Self {
            imu_hz: 200.0,
            lidar_to_imu: RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.1)),
            lidar: LidarModel::default(),
            camera: Some(CameraModel::default()),
            noise: NoiseModel::default(),
        }
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            gravity: Vector3::new(0.0, 0.0, -9.81),
            scene: Scene::room(20.0, 4.0),
            trajectory: Trajectory::Orbit(Orbit::default()),
            rig: SensorRig::default(),
        }
    }
}

fn invalid(m: impl Into<String>) -> SimError {
    SimError::InvalidConfig(m.into())
}

fn positive(name: &str, v: f64) -> Result<f64, SimError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("`{name}` must be positive, got {v}")))
    }
}

/// Rig keys shared by simulator configs, dataset calibration files and pipeline configs.
pub fn rig_from_kv(kv: &KeyValues) -> Result<SensorRig, SimError> {
    let d = SensorRig::default();
    let ld = d.lidar;
    let lidar = LidarModel {
        sweep_hz: positive("lidar.hz", kv.get_or("lidar.hz", ld.sweep_hz)?)?,
        rings: kv.get_or("lidar.rings", ld.rings)?,
        azimuth_steps: kv.get_or("lidar.azimuth_steps", ld.azimuth_steps)?,
        min_elevation: kv.get_or("lidar.min_elevation_deg", ld.min_elevation.to_degrees())?.to_radians(),
        max_elevation: kv.get_or("lidar.max_elevation_deg", ld.max_elevation.to_degrees())?.to_radians(),
        max_range: positive("lidar.max_range", kv.get_or("lidar.max_range", ld.max_range)?)?,
    };
    if lidar.rings == 0 || lidar.azimuth_steps == 0 {
        return Err(invalid("lidar needs at least one ring and one azimuth step"));
    }
    let camera = if kv.get_bool_or("camera.enabled", true)? {
        let cd = CameraModel::default();
        let intrinsics = match kv.get_vec("camera.intrinsics")? {
            None => cd.intrinsics,
            Some(v) if v.len() == 4 => Intrinsics { fx: v[0], fy: v[1], cx: v[2], cy: v[3] },
            Some(_) => return Err(invalid("`camera.intrinsics` needs fx fy cx cy")),
        };
        let distortion = match kv.get_vec("camera.distortion")? {
            None => cd.distortion,
            Some(v) => Distortion::from_coefficients(&v).ok_or_else(|| invalid("`camera.distortion` needs 0, 4 or 5 numbers"))?,
        };
        let channels = kv.get_or("camera.channels", cd.channels)?;
        if channels != 1 && channels != 3 {
            return Err(invalid("`camera.channels` must be 1 or 3"));
        }
        let cam = CameraModel {
            hz: positive("camera.hz", kv.get_or("camera.hz", cd.hz)?)?,
            width: kv.get_or("camera.width", cd.width)?,
            height: kv.get_or("camera.height", cd.height)?,
            channels,
            intrinsics,
            distortion,
            time_offset: kv.get_or("camera.time_offset", cd.time_offset)?,
            camera_to_imu: kv.get_transform("camera.extrinsic")?.unwrap_or(cd.camera_to_imu),
        };
        positive("camera.intrinsics fx", cam.intrinsics.fx)?;
        positive("camera.intrinsics fy", cam.intrinsics.fy)?;
        if cam.width < 8 || cam.height < 8 {
            return Err(invalid("camera image must be at least 8x8"));
        }
        Some(cam)
    } else {
        None
    };
    let vec3 = |k: &str| kv.get_vector3(k).map(|v| v.unwrap_or_default());
    let noise = NoiseModel {
        gyro_density: kv.get_or("noise.gyro", 0.0)?,
        accel_density: kv.get_or("noise.accel", 0.0)?,
        gyro_bias: vec3("noise.gyro_bias")?,
        accel_bias: vec3("noise.accel_bias")?,
        range_sigma: kv.get_or("noise.range", 0.0)?,
        pixel_sigma: kv.get_or("noise.pixel", 0.0)?,
    };
    for (name, v) in [("noise.gyro", noise.gyro_density), ("noise.accel", noise.accel_density), ("noise.range", noise.range_sigma), ("noise.pixel", noise.pixel_sigma)] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(invalid(format!("`{name}` must be non-negative")));
        }
    }
    Ok(SensorRig {
        imu_hz: positive("imu.hz", kv.get_or("imu.hz", d.imu_hz)?)?,
        lidar_to_imu: kv.get_transform("lidar.extrinsic")?.unwrap_or(d.lidar_to_imu),
        lidar,
        camera,
        noise,
    })
}

/// Rig description in the keys read by [`rig_from_kv`]. Noise is left out.
pub fn rig_to_kv(rig: &SensorRig) -> KeyValues {
    let mut kv = KeyValues::default();
    let l = &rig.lidar;
    kv.insert("imu.hz", rig.imu_hz);
    kv.insert("lidar.hz", l.sweep_hz);
    kv.insert("lidar.rings", l.rings);
    kv.insert("lidar.azimuth_steps", l.azimuth_steps);
    kv.insert("lidar.min_elevation_deg", l.min_elevation.to_degrees());
    kv.insert("lidar.max_elevation_deg", l.max_elevation.to_degrees());
    kv.insert("lidar.max_range", l.max_range);
    kv.insert("lidar.extrinsic", format_transform(&rig.lidar_to_imu));
    match &rig.camera {
        None => kv.insert("camera.enabled", false),
        Some(c) => {
            let i = c.intrinsics;
            let dist: Vec<String> = c.distortion.coefficients().iter().map(|v| v.to_string()).collect();
            kv.insert("camera.enabled", true);
            kv.insert("camera.hz", c.hz);
            kv.insert("camera.width", c.width);
            kv.insert("camera.height", c.height);
            kv.insert("camera.channels", c.channels);
            kv.insert("camera.intrinsics", format!("{} {} {} {}", i.fx, i.fy, i.cx, i.cy));
            kv.insert("camera.distortion", dist.join(" "));
            kv.insert("camera.time_offset", c.time_offset);
            kv.insert("camera.extrinsic", format_transform(&c.camera_to_imu));
        }
    }
    kv
}

fn texture_of(v: &[f64]) -> Texture {
    match v {
        [g] => Texture::gray(*g),
        [r, g, b] => Texture::Uniform(Vector3::new(*r, *g, *b)),
        _ => Texture::gray(128.0),
    }
}

fn scene_from_kv(kv: &KeyValues) -> Result<Scene, SimError> {
    let mut scene = match kv.get_str("scene").unwrap_or("room") {
        "room" => Scene::room(positive("scene.size", kv.get_or("scene.size", 20.0)?)?, positive("scene.height", kv.get_or("scene.height", 4.0)?)?),
        "empty" => Scene::default(),
        other => return Err(invalid(format!("unknown scene `{other}`"))),
    };
    for (v, line) in kv.get_all("plane") {
        let n: Vec<f64> = v.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| invalid(format!("line {line}: bad plane")))?;
        if n.len() < 8 {
            return Err(invalid(format!("line {line}: plane needs cx cy cz nx ny nz half_u half_v [albedo]")));
        }
        let normal = Vector3::new(n[3], n[4], n[5]);
        let hint = if normal.normalize().z.abs() > 0.9 { Vector3::x() } else { Vector3::z() };
        let patch = Patch::new(Vector3::new(n[0], n[1], n[2]), normal, hint, (n[6], n[7]), texture_of(&n[8..]))
            .ok_or_else(|| invalid(format!("line {line}: degenerate plane normal")))?;
        scene.patches.push(patch);
    }
    for (v, line) in kv.get_all("box") {
        let n: Vec<f64> = v.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| invalid(format!("line {line}: bad box")))?;
        if n.len() < 6 || (0..3).any(|i| !(n[i] < n[i + 3])) {
            return Err(invalid(format!("line {line}: box needs min and max corners [albedo]")));
        }
        scene.boxes.push(AaBox { min: Vector3::new(n[0], n[1], n[2]), max: Vector3::new(n[3], n[4], n[5]), texture: texture_of(&n[6..]) });
    }
    if let Some(level) = kv.get::<f64>("scene.albedo")? {
        for p in &mut scene.patches {
            p.texture = Texture::gray(level);
        }
        for b in &mut scene.boxes {
            b.texture = Texture::gray(level);
        }
    }
    Ok(scene)
}

fn trajectory_from_kv(kv: &KeyValues) -> Result<Trajectory, SimError> {
    let duration = positive("duration", kv.get_or("duration", 30.0)?)?;
    match kv.get_str("trajectory").unwrap_or("orbit") {
        "orbit" => {
            let d = Orbit::default();
            Trajectory::orbit(Orbit {
                center: kv.get_vector3("orbit.center")?.unwrap_or(d.center),
                radius: kv.get_or("orbit.radius", d.radius)?,
                duration,
                laps: kv.get_or("orbit.laps", d.laps)?,
                height_amplitude: kv.get_or("orbit.height_amplitude", d.height_amplitude)?,
                height_cycles: kv.get_or("orbit.height_cycles", d.height_cycles)?,
                roll_amplitude: kv.get_or("orbit.roll", d.roll_amplitude)?,
                pitch_amplitude: kv.get_or("orbit.pitch", d.pitch_amplitude)?,
                tilt_cycles: kv.get_or("orbit.tilt_cycles", d.tilt_cycles)?,
                yaw_offset: kv.get_or("orbit.yaw_offset", d.yaw_offset)?,
            })
        }
        "static" => {
            let pose = kv.get_transform("static.pose")?.unwrap_or(RigidTransform::from_translation(Vector3::new(0.0, 0.0, 1.5)));
            Trajectory::keyframes(vec![(0.0, pose), (duration, pose)])
        }
        "keyframes" => {
            let mut frames = Vec::new();
            for (v, line) in kv.get_all("keyframe") {
                let n: Vec<f64> = v.split_whitespace().map(str::parse).collect::<Result<_, _>>().map_err(|_| invalid(format!("line {line}: bad keyframe")))?;
                let arr: [f64; 7] = n.get(1..).and_then(|s| s.try_into().ok()).ok_or_else(|| invalid(format!("line {line}: keyframe needs t x y z qw qx qy qz")))?;
                let pose = crate::io::transform_from(&arr).ok_or_else(|| invalid(format!("line {line}: degenerate quaternion")))?;
                frames.push((n[0], pose));
            }
            Trajectory::keyframes(frames)
        }
        other => Err(invalid(format!("unknown trajectory `{other}`"))),
    }
}

impl SimConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self, SimError> {
        Ok(Self {
            seed: kv.get_or("seed", 1)?,
            gravity: kv.get_vector3("gravity")?.unwrap_or(Vector3::new(0.0, 0.0, -9.81)),
            scene: scene_from_kv(kv)?,
            trajectory: trajectory_from_kv(kv)?,
            rig: rig_from_kv(kv)?,
        })
    }

    pub fn read(path: &std::path::Path) -> Result<Self, SimError> {
        let kv = KeyValues::read(path).map_err(|e| e.in_file(path))?;
        Self::from_kv(&kv)
    }

    /// True rig plus gravity, in calibration-file keys.
    pub fn calibration(&self) -> KeyValues {
        let mut kv = rig_to_kv(&self.rig);
        let g = self.gravity;
        kv.insert("gravity", format!("{} {} {}", g.x, g.y, g.z));
        kv
    }
}

const IMU_STREAM: u64 = 0;
const SWEEP_STREAM: u64 = 1 << 32;
const FRAME_STREAM: u64 = 2 << 32;

/// A configured simulation. IMU readings are generated up front; sweeps and frames are
/// generated on demand.
pub struct Simulation {
    pub config: SimConfig,
    imu: Vec<ImuSample<f64>>,
    frames: Vec<i64>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Self {
        let mut rng = Self::rng(config.seed, IMU_STREAM);
        let imu = sample_imu(&config.trajectory, &config.rig, &config.gravity, &mut rng);
        let frames = config.rig.camera.map_or(Vec::new(), |c| frame_indices(&config.trajectory, &c).collect());
        Self { config, imu, frames }
    }

    fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    pub fn trajectory(&self) -> &Trajectory {
        &self.config.trajectory
    }

    pub fn imu(&self) -> &[ImuSample<f64>] {
        &self.imu
    }

    pub fn sweep_indices(&self) -> std::ops::Range<i64> {
        sweep_indices(&self.config.trajectory, &self.config.rig.lidar)
    }

    pub fn sweep(&self, k: i64) -> RawSweep {
        let c = &self.config;
        sample_sweep(&c.trajectory, &c.rig, &c.scene, k, &mut Self::rng(c.seed, SWEEP_STREAM.wrapping_add(k as u64)))
    }

    pub fn sweeps(&self) -> impl Iterator<Item = RawSweep> + '_ {
        self.sweep_indices().map(|k| self.sweep(k))
    }

    pub fn image_stamps(&self) -> Vec<Timestamp> {
        match &self.config.rig.camera {
            Some(cam) => self.frames.iter().map(|&i| Timestamp(camera_stamp(cam, i))).collect(),
            None => Vec::new(),
        }
    }

    /// Frame `index` of [`Self::image_stamps`].
    pub fn render(&self, index: usize) -> Option<ImageFrame> {
        let c = &self.config;
        let cam = c.rig.camera.as_ref()?;
        let i = *self.frames.get(index)?;
        let stamp = camera_stamp(cam, i);
        let mut rng = Self::rng(c.seed, FRAME_STREAM.wrapping_add(i as u64));
        Some(render_frame(&c.trajectory, cam, &c.scene, stamp + cam.time_offset, stamp, c.rig.noise.pixel_sigma, &mut rng))
    }

    pub fn frames(&self) -> impl Iterator<Item = ImageFrame> + '_ {
        (0..self.frames.len()).filter_map(|i| self.render(i))
    }

    /// Time-ordered sensor events with the frame index as image payload.
    pub fn events(&self) -> impl Iterator<Item = Event<usize>> + '_ {
        let images = self.image_stamps().into_iter().enumerate().map(|(i, s)| (s, i));
        MergedEvents::new(self.imu.iter().copied(), self.sweeps().flat_map(|s| s.points), images)
    }

    /// Ground-truth IMU poses at the IMU stamps.
    pub fn groundtruth(&self) -> TrajectoryRecord {
        self.imu.iter().map(|s| (s.stamp.secs(), self.config.trajectory.pose(s.stamp.secs()))).collect()
    }
}

impl FrameSource for Simulation {
    fn frame(&self, index: usize) -> Result<ImageFrame, IoError> {
        self.render(index).ok_or_else(|| IoError::Invalid(format!("no frame {index}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimConfig {
        let kv = KeyValues::parse(
            "seed = 3\nduration = 1\nlidar.azimuth_steps = 90\nlidar.rings = 4\ncamera.width = 32\ncamera.height = 24\n\
             camera.intrinsics = 30 30 16 12\nnoise.gyro = 0.001\nnoise.range = 0.02\nnoise.pixel = 2\n",
        )
        .unwrap();
        SimConfig::from_kv(&kv).unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let c = SimConfig::from_kv(&KeyValues::default()).unwrap();
        assert_eq!(c, SimConfig::default());
        let c = small();
        assert_eq!(c.seed, 3);
        assert_eq!(c.rig.lidar.points_per_sweep(), 360);
        assert_eq!(c.trajectory.end(), 1.0);
        let bad = KeyValues::parse("camera.channels = 2\n").unwrap();
        assert!(SimConfig::from_kv(&bad).is_err());
        let bad = KeyValues::parse("trajectory = spiral\n").unwrap();
        assert!(SimConfig::from_kv(&bad).is_err());
    }

    #[test]
    fn calibration_round_trips_the_rig() {
        let c = small();
        let rig = rig_from_kv(&c.calibration()).unwrap();
        assert_eq!(rig.lidar, c.rig.lidar);
        let (a, b) = (rig.camera.unwrap(), c.rig.camera.unwrap());
        assert_eq!(a.intrinsics, b.intrinsics);
        assert!(a.camera_to_imu.rotation.angle_to(&b.camera_to_imu.rotation) < 1e-12);
    }

    #[test]
    fn forward_camera_sees_ahead() {
        let r = forward_camera_rotation();
        assert!((r.apply(&Vector3::z()) - Vector3::x()).norm() < 1e-12);
        assert!((r.apply(&Vector3::x()) + Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn generation_is_order_independent_and_deterministic() {
        let sim = Simulation::new(small());
        let ks: Vec<i64> = sim.sweep_indices().collect();
        let forward: Vec<RawSweep> = ks.iter().map(|&k| sim.sweep(k)).collect();
        let backward: Vec<RawSweep> = ks.iter().rev().map(|&k| sim.sweep(k)).collect();
        assert!(forward.iter().zip(backward.iter().rev()).all(|(a, b)| a == b));
        assert_eq!(sim.render(3), Simulation::new(small()).render(3));
        assert_ne!(sim.render(3).unwrap().data, sim.render(4).unwrap().data);
        let events: Vec<_> = sim.events().collect();
        assert!(events.windows(2).all(|w| w[0].stamp() <= w[1].stamp()));
        let n_img = events.iter().filter(|e| matches!(e, Event::Image { .. })).count();
        assert_eq!(n_img, sim.image_stamps().len());
    }
}
