use std::path::{Path, PathBuf};

use nalgebra::Vector3;

use super::PipelineError;
use crate::io::KeyValues;
use crate::lio::{ImuNoise, RegistrationConfig, VoxelMapConfig};
use crate::sim::{rig_from_kv, SensorRig};
use crate::sweep::{Mode, StreamConfig};
use crate::vision::{CameraCovariance, PromotionConfig, RenderConfig, TrackerConfig, VisionConfig, EXT_POS, EXT_ROT, INTR, T_OFF};

/// Where a run reads its sensor streams from.
#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Dataset(PathBuf),
    Simulation(PathBuf),
}

/// Standard deviations of the initial camera-parameter uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPrior {
    /// seconds
    pub time_offset: f64,
    /// radians
    pub rotation: f64,
    /// meters
    pub translation: f64,
    /// pixels
    pub focal: f64,
    /// pixels
    pub principal: f64,
}

impl Default for CameraPrior {
    fn default() -> Self {
        Self { time_offset: 0.01, rotation: 0.05, translation: 0.05, focal: 20.0, principal: 10.0 }
    }
}

impl CameraPrior {
    pub fn covariance(&self) -> CameraCovariance<f64> {
        let mut d = [0.0; crate::vision::CAM_DIM];
        d[T_OFF] = self.time_offset;
        d[EXT_ROT..EXT_ROT + 3].fill(self.rotation);
        d[EXT_POS..EXT_POS + 3].fill(self.translation);
        d[INTR..INTR + 2].fill(self.focal);
        d[INTR + 2..INTR + 4].fill(self.principal);
        CameraCovariance::from_diagonal(&d.map(|s| s * s).into())
    }
}

/// Standard deviations of the initial navigation-state uncertainty.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NavPrior {
    pub rotation: f64,
    pub position: f64,
    pub velocity: f64,
    pub gyro_bias: f64,
    pub accel_bias: f64,
}

impl Default for NavPrior {
    fn default() -> Self {
        Self { rotation: 0.01, position: 0.01, velocity: 0.01, gyro_bias: 1e-3, accel_bias: 1e-2 }
    }
}

/// Everything a run needs besides its input streams.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub input: Option<Input>,
    pub output: Option<PathBuf>,
    /// Fixed LiDAR extrinsic, distortion, and initial guesses for the camera parameters.
    pub rig: SensorRig,
    pub gravity: Vector3<f64>,
    pub stream: StreamConfig,
    /// Forces a reconstruction mode instead of deriving it from the rates.
    pub mode: Option<Mode>,
    pub imu_noise: ImuNoise,
    pub nav_prior: NavPrior,
    /// Span of IMU readings averaged to level the initial attitude, seconds.
    pub init_window: f64,
    pub map: VoxelMapConfig,
    pub registration: RegistrationConfig,
    pub vision_enabled: bool,
    pub photometric: bool,
    pub vision: VisionConfig,
    pub camera_prior: CameraPrior,
    pub tracker: TrackerConfig,
    pub promotion: PromotionConfig,
    pub render: RenderConfig,
    /// Abort after more than this many consecutive degenerate registrations.
    pub max_degenerate: usize,
}

impl PipelineConfig {
    /// Defaults around a given rig.
    pub fn new(rig: SensorRig, gravity: Vector3<f64>) -> Self {
        let stream = StreamConfig {
            lidar_sweep_hz: rig.lidar.sweep_hz,
            camera_hz: rig.camera.map_or(rig.lidar.sweep_hz, |c| c.hz),
            ..StreamConfig::default()
        };
        Self {
            input: None,
            output: None,
            imu_noise: ImuNoise { nominal_period: 1.0 / rig.imu_hz, ..ImuNoise::default() },
            rig,
            gravity,
            stream,
            mode: None,
            nav_prior: NavPrior::default(),
            init_window: 0.05,
            map: VoxelMapConfig::default(),
            registration: RegistrationConfig::default(),
            vision_enabled: true,
            photometric: true,
            vision: VisionConfig::default(),
            camera_prior: CameraPrior::default(),
            tracker: TrackerConfig::default(),
            promotion: PromotionConfig::default(),
            render: RenderConfig::default(),
            max_degenerate: 10,
        }
    }

    /// Parses a flat key-value document. Rig keys follow the simulator and calibration
    /// format; a dataset's `calib.txt` should be merged in first so the config can override
    /// individual entries with initial guesses.
    pub fn from_kv(kv: &KeyValues) -> Result<Self, PipelineError> {
        let rig = rig_from_kv(kv)?;
        let gravity = kv.get_vector3("gravity")?.unwrap_or(Vector3::new(0.0, 0.0, -9.81));
        let mut c = Self::new(rig, gravity);

        c.input = match (kv.get_str("dataset"), kv.get_str("simulation")) {
            (Some(_), Some(_)) => return Err(PipelineError::Config("set only one of `dataset` and `simulation`".into())),
            (Some(d), None) => Some(Input::Dataset(d.into())),
            (None, Some(s)) => Some(Input::Simulation(s.into())),
            (None, None) => None,
        };
        c.output = kv.get_str("output").map(PathBuf::from);

        c.stream.min_fraction = kv.get_or("stream.min_fraction", c.stream.min_fraction)?;
        c.mode = match kv.get_str("stream.mode").unwrap_or("auto") {
            "auto" => None,
            "fast" => Some(Mode::Fast),
            "medium" => Some(Mode::Medium),
            "slow" => Some(Mode::Slow),
            m => return Err(PipelineError::Config(format!("unknown stream.mode `{m}`"))),
        };

        let n = &mut c.imu_noise;
        n.gyro_density = kv.get_or("imu.gyro_noise", n.gyro_density)?;
        n.accel_density = kv.get_or("imu.accel_noise", n.accel_density)?;
        n.gyro_bias_walk = kv.get_or("imu.gyro_walk", n.gyro_bias_walk)?;
        n.accel_bias_walk = kv.get_or("imu.accel_walk", n.accel_bias_walk)?;
        if let Some(v) = kv.get_vec("init.sigma")? {
            let [rotation, position, velocity, gyro_bias, accel_bias] =
                <[f64; 5]>::try_from(v.as_slice()).map_err(|_| PipelineError::Config("`init.sigma` needs 5 numbers".into()))?;
            c.nav_prior = NavPrior { rotation, position, velocity, gyro_bias, accel_bias };
        }
        c.init_window = kv.get_or("init.window", c.init_window)?;

        c.map.voxel_size = kv.get_or("lio.voxel_size", c.map.voxel_size)?;
        c.map.capacity = kv.get_or("lio.voxel_capacity", c.map.capacity)?;
        c.map.min_distance = kv.get_or("lio.min_distance", c.map.min_distance)?;
        let r = &mut c.registration;
        r.downsample = kv.get_or("lio.downsample", r.downsample)?;
        r.neighbors = kv.get_or("lio.neighbors", r.neighbors)?;
        r.max_neighbor_distance = kv.get_or("lio.max_neighbor_distance", r.max_neighbor_distance)?;
        r.max_residual = kv.get_or("lio.max_residual", r.max_residual)?;
        r.sigma = kv.get_or("lio.sigma", r.sigma)?;
        r.max_iterations = kv.get_or("lio.max_iterations", r.max_iterations)?;
        r.research_step = kv.get_or("lio.research_step", r.research_step)?;
        r.min_correspondences = kv.get_or("lio.min_correspondences", r.min_correspondences)?;
        c.max_degenerate = kv.get_or("lio.max_degenerate", c.max_degenerate)?;

        c.vision_enabled = kv.get_bool_or("vision.enabled", c.vision_enabled)?;
        c.photometric = kv.get_bool_or("vision.photometric", c.photometric)?;
        let v = &mut c.vision;
        v.sigma_pnp = kv.get_or("vision.sigma_pnp", v.sigma_pnp)?;
        v.huber_pnp = kv.get_or("vision.huber_pnp", v.huber_pnp)?;
        v.sigma_photo = kv.get_or("vision.sigma_photo", v.sigma_photo)?;
        v.huber_photo = kv.get_or("vision.huber_photo", v.huber_photo)?;
        v.max_iterations = kv.get_or("vision.max_iterations", v.max_iterations)?;
        v.min_features = kv.get_or("vision.min_features", v.min_features)?;
        v.time_offset_bound = kv.get_or("vision.time_offset_bound", v.time_offset_bound)?;
        if let Some(p) = kv.get_vec("vision.prior_sigma")? {
            let [time_offset, rotation, translation, focal, principal] = <[f64; 5]>::try_from(p.as_slice())
                .map_err(|_| PipelineError::Config("`vision.prior_sigma` needs 5 numbers".into()))?;
            c.camera_prior = CameraPrior { time_offset, rotation, translation, focal, principal };
        }
        c.tracker.levels = kv.get_or("track.levels", c.tracker.levels)?;
        c.tracker.window = kv.get_or("track.window", c.tracker.window)?;
        c.promotion.min_features = kv.get_or("track.min_features", c.promotion.min_features)?;
        c.promotion.cell = kv.get_or("track.cell", c.promotion.cell)?;

        c.validate()?;
        Ok(c)
    }

    /// Reads a config file and resolves its relative paths against the file's directory.
    /// For dataset inputs the dataset's `calib.txt` is loaded underneath the config.
    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        let kv = KeyValues::read(path).map_err(|e| e.in_file(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &str| if Path::new(p).is_absolute() { PathBuf::from(p) } else { base.join(p) };
        let mut merged = KeyValues::default();
        if let Some(d) = kv.get_str("dataset") {
            let calib = resolve(d).join("calib.txt");
            merged = KeyValues::read(&calib).map_err(|e| e.in_file(&calib))?;
        } else if let Some(s) = kv.get_str("simulation") {
            let sim = crate::sim::SimConfig::read(&resolve(s))?;
            merged = sim.calibration();
        }
        merged.extend(&kv);
        let mut c = Self::from_kv(&merged)?;
        c.input = c.input.map(|i| match i {
            Input::Dataset(p) => Input::Dataset(resolve(&p.to_string_lossy())),
            Input::Simulation(p) => Input::Simulation(resolve(&p.to_string_lossy())),
        });
        c.output = c.output.map(|p| resolve(&p.to_string_lossy()));
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: &str| Err(PipelineError::Config(m.into()));
        self.stream.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        let positive = [
            ("imu noise", self.imu_noise.gyro_density.min(self.imu_noise.accel_density)),
            ("imu bias walk", self.imu_noise.gyro_bias_walk.min(self.imu_noise.accel_bias_walk)),
            ("lio.voxel_size", self.map.voxel_size),
            ("lio.downsample", self.registration.downsample),
            ("lio.sigma", self.registration.sigma),
            ("lio.max_residual", self.registration.max_residual),
            ("lio.max_neighbor_distance", self.registration.max_neighbor_distance),
            ("vision.sigma_pnp", self.vision.sigma_pnp),
            ("vision.huber_pnp", self.vision.huber_pnp),
            ("vision.sigma_photo", self.vision.sigma_photo),
            ("vision.huber_photo", self.vision.huber_photo),
            ("vision.time_offset_bound", self.vision.time_offset_bound),
            ("init.window", self.init_window),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("`{name}` must be positive"));
            }
        }
        let p = self.nav_prior;
        let c = self.camera_prior;
        let priors = [p.rotation, p.position, p.velocity, p.gyro_bias, p.accel_bias, c.time_offset, c.rotation, c.translation, c.focal, c.principal];
        if !priors.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return bad("initial covariance diagonal must be positive");
        }
        if self.map.capacity == 0 || self.registration.neighbors < 3 || self.vision.max_iterations == 0 {
            return bad("map capacity, neighbor count and iteration counts must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_keys_override() {
        let c = PipelineConfig::from_kv(&KeyValues::default()).unwrap();
        assert!(c.input.is_none());
        assert_eq!(c.stream.camera_hz, 15.0);
        let kv = KeyValues::parse("simulation = sim.cfg\nlio.sigma = 0.05\nvision.prior_sigma = 0.01 0.1 0.1 30 10\nstream.mode = slow\n").unwrap();
        let c = PipelineConfig::from_kv(&kv).unwrap();
        assert_eq!(c.input, Some(Input::Simulation("sim.cfg".into())));
        assert_eq!(c.registration.sigma, 0.05);
        assert_eq!(c.camera_prior.focal, 30.0);
        assert_eq!(c.mode, Some(Mode::Slow));
        assert!((c.camera_prior.covariance()[(INTR, INTR)] - 900.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_tolerances() {
        for text in ["lio.sigma = 0\n", "vision.prior_sigma = 0 1 1 1 1\n", "init.sigma = 1 1 1 1\n", "dataset = a\nsimulation = b\n"] {
            assert!(PipelineConfig::from_kv(&KeyValues::parse(text).unwrap()).is_err(), "{text}");
        }
    }
}
