//! Per-packet orchestration: sweep reconstruction feeds the LiDAR-inertial filter, and
//! packets that end at an image then run the vision stage on the freshly estimated state.

mod config;
mod output;

pub use config::{CameraPrior, Input, NavPrior, PipelineConfig};
pub use output::{read_map_csv, write_map_csv, write_run, map_vertices};

use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector2, Vector3};

use crate::geometry::{ImuSample, MotionState, RigidTransform, Rotation, Timestamp, TIME_EPS};
use crate::io::{read_dataset, Dataset, FrameSource, IoError, TrajectoryRecord};
use crate::lio::{
    compensate_motion, diagonal_covariance, propagate, register, LioError, NavState, RegistrationStatus, VoxelMap,
};
use crate::sim::{SimConfig, SimError, Simulation};
use crate::sweep::{classify_mode, Event, Mode, Reconstructor, SweepError, SyncedPacket};
use crate::vision::{
    extract_recent_points, pinhole, promote_features, render, track_features, undistort_image, world_to_camera,
    CameraFilter, CameraParams, ImageFrame, PhotometricPoint, TrackedFeature, UpdateStatus, MIN_DEPTH,
};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("stream error before packet {packet}: {source}")]
    Sweep { packet: usize, source: SweepError },
    #[error("packet {packet}: {source}")]
    Lio { packet: usize, source: LioError },
    #[error("packet {packet}: image {index} unavailable: {source}")]
    Frame { packet: usize, index: usize, source: IoError },
    #[error("packet {packet}: registration degenerate for {count} consecutive packets ({correspondences} correspondences in the last)")]
    Degenerate { packet: usize, count: usize, correspondences: usize },
}

/// Wall-clock cost of one packet, in seconds.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StageTiming {
    pub stamp: f64,
    pub lidar: f64,
    pub vision: f64,
    pub total: f64,
}

/// Per-packet record of what ran.
#[derive(Clone, Debug, PartialEq)]
pub struct PacketLog {
    pub index: usize,
    pub begin: f64,
    pub end: f64,
    pub points: usize,
    pub image_stamp: Option<f64>,
    /// Stamp of the navigation state handed to the vision stage.
    pub vision_nav_stamp: Option<f64>,
    pub registration: RegistrationStatus,
    /// Set when the LiDAR-inertial update had finished before any vision work started.
    pub lio_before_vision: bool,
    pub pnp: Option<UpdateStatus>,
    pub photometric: Option<UpdateStatus>,
    pub features: usize,
    pub rendered: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct BranchCounters {
    pub lio_only: usize,
    pub with_vision: usize,
    /// Packets dropped because the IMU did not reach their end.
    pub skipped: usize,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trajectory: TrajectoryRecord,
    pub map: VoxelMap,
    pub camera_history: Vec<(f64, CameraParams<f64>)>,
    pub timings: Vec<StageTiming>,
    pub packets: Vec<PacketLog>,
    pub counters: BranchCounters,
    pub mode: Mode,
}

impl RunOutput {
    /// Mean per-packet (LiDAR, vision, total) seconds.
    pub fn mean_timing(&self) -> (f64, f64, f64) {
        let n = self.timings.len().max(1) as f64;
        let sum = self.timings.iter().fold((0.0, 0.0, 0.0), |a, t| (a.0 + t.lidar, a.1 + t.vision, a.2 + t.total));
        (sum.0 / n, sum.1 / n, sum.2 / n)
    }
}

struct PreviousImage {
    stamp: f64,
    gray: ImageFrame,
    nav_pose: RigidTransform<f64>,
    params: CameraParams<f64>,
}

/// Streaming pipeline state. Feed packets in order with [`Pipeline::process`].
pub struct Pipeline {
    cfg: PipelineConfig,
    state: Option<NavState>,
    filter: Option<CameraFilter<f64>>,
    features: Vec<TrackedFeature<f64>>,
    previous: Option<PreviousImage>,
    degenerate_run: usize,
    out: RunOutput,
}

/// Attitude that maps the mean specific force of the readings onto the world up axis.
fn level_attitude(imu: &[ImuSample<f64>], window: f64, gravity: &Vector3<f64>) -> Rotation<f64> {
    let Some(first) = imu.first() else { return Rotation::identity() };
    let readings: Vec<_> = imu.iter().filter(|s| s.stamp.secs() <= first.stamp.secs() + window).collect();
    let mean = readings.iter().map(|s| s.linear_acceleration).sum::<Vector3<f64>>() / readings.len() as f64;
    UnitQuaternion::rotation_between(&mean, &(-gravity))
        .map(Rotation::from_unit_quaternion)
        .unwrap_or_else(Rotation::identity)
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let filter = match (&cfg.rig.camera, cfg.vision_enabled) {
            (Some(cam), true) => Some(CameraFilter::new(cam.params(), cfg.camera_prior.covariance(), cfg.vision)),
            _ => None,
        };
        let mode = cfg.mode.unwrap_or(if cfg.rig.camera.is_some() { classify_mode(&cfg.stream) } else { Mode::Slow });
        let out = RunOutput {
            trajectory: Vec::new(),
            map: VoxelMap::new(cfg.map),
            camera_history: Vec::new(),
            timings: Vec::new(),
            packets: Vec::new(),
            counters: BranchCounters::default(),
            mode,
        };
        Self { cfg, state: None, filter, features: Vec::new(), previous: None, degenerate_run: 0, out }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn state(&self) -> Option<&NavState> {
        self.state.as_ref()
    }

    pub fn camera_filter(&self) -> Option<&CameraFilter<f64>> {
        self.filter.as_ref()
    }

    pub fn output(&self) -> &RunOutput {
        &self.out
    }

    pub fn reconstructor(&self) -> Reconstructor<usize> {
        Reconstructor::with_mode(self.cfg.stream, self.out.mode)
    }

    fn initial_state(&self, imu: &[ImuSample<f64>], stamp: Timestamp) -> NavState {
        let mut motion = MotionState::at_rest(stamp);
        motion.pose.rotation = level_attitude(imu, self.cfg.init_window, &self.cfg.gravity);
        let p = self.cfg.nav_prior;
        NavState::new(motion, diagonal_covariance(p.rotation, p.position, p.velocity, p.gyro_bias, p.accel_bias))
    }

    /// Runs one synchronized packet through the LiDAR-inertial stage and, if it carries an
    /// image, the vision stage.
    pub fn process(&mut self, packet: SyncedPacket<usize>, frames: &(impl FrameSource + ?Sized)) -> Result<(), PipelineError> {
        let index = self.out.packets.len() + self.out.counters.skipped;
        let mut t_start = Instant::now();
        let sweep = &packet.sweep;
        let end = sweep.end;
        let covered = packet.imu.last().is_some_and(|s| s.stamp.secs() >= end.secs() - TIME_EPS);
        if !covered || self.out.trajectory.last().is_some_and(|(t, _)| end.secs() <= *t) {
            self.out.counters.skipped += 1;
            log::debug!("packet {index} skipped: IMU does not reach {end}");
            return Ok(());
        }
        let prev = match self.state.take() {
            Some(s) => s,
            None => self.initial_state(&packet.imu, packet.imu[0].stamp),
        };
        let l2i = self.cfg.rig.lidar_to_imu;
        let g = self.cfg.gravity;
        let predicted = propagate(&prev, &packet.imu, &self.cfg.imu_noise, &g).map_err(|source| PipelineError::Lio { packet: index, source })?;
        let deskewed = compensate_motion(sweep, &prev.motion, &packet.imu, &l2i, &g);
        let outcome = register(&deskewed.points, &self.out.map, &predicted, &l2i, &self.cfg.registration);
        if let RegistrationStatus::Degenerate { correspondences } = outcome.status {
            self.degenerate_run += 1;
            if self.degenerate_run > self.cfg.max_degenerate {
                return Err(PipelineError::Degenerate { packet: index, count: self.degenerate_run, correspondences });
            }
        } else {
            self.degenerate_run = 0;
        }
        let mut state = outcome.state;
        state.motion.stamp = end;
        let body_to_world = state.pose().compose(&l2i);
        let world: Vec<Vector3<f64>> = deskewed.points.iter().map(|p| body_to_world.apply(p)).collect();
        self.out.map.update(&world, end);
        self.out.trajectory.push((end.secs(), *state.pose()));
        let lidar = t_start.elapsed().as_secs_f64();

        let mut log = PacketLog {
            index,
            begin: sweep.begin.secs(),
            end: end.secs(),
            points: sweep.points.len(),
            image_stamp: packet.image_stamp.map(Timestamp::secs),
            vision_nav_stamp: None,
            registration: outcome.status,
            lio_before_vision: true,
            pnp: None,
            photometric: None,
            features: 0,
            rendered: 0,
        };
        self.state = Some(state);

        // Frame acquisition (decoding or simulated rendering) is not part of the vision stage.
        let mut t_vision = Instant::now();
        match (packet.image, packet.image_stamp, self.filter.is_some()) {
            (Some(frame_index), Some(stamp), true) => {
                let raw = frames.frame(frame_index).map_err(|source| PipelineError::Frame { packet: index, index: frame_index, source })?;
                let acquire = t_vision.elapsed();
                t_vision = Instant::now();
                t_start += acquire;
                self.vision(stamp, &raw, &mut log);
                self.out.counters.with_vision += 1;
            }
            _ => self.out.counters.lio_only += 1,
        }
        let vision = if log.vision_nav_stamp.is_some() { t_vision.elapsed().as_secs_f64() } else { 0.0 };
        self.out.timings.push(StageTiming { stamp: end.secs(), lidar, vision, total: t_start.elapsed().as_secs_f64() });
        self.out.packets.push(log);
        Ok(())
    }

    fn vision(&mut self, stamp: Timestamp, raw: &ImageFrame, log: &mut PacketLog) {
        let (Some(state), Some(filter), Some(cam)) = (&self.state, &mut self.filter, &self.cfg.rig.camera) else { return };
        let nav_pose = *state.pose();
        log.vision_nav_stamp = Some(state.stamp().secs());
        log.lio_before_vision = self.out.trajectory.last().is_some_and(|(t, _)| *t == state.stamp().secs());

        let image = undistort_image(raw, &cam.intrinsics, &cam.distortion);
        let gray = if image.channels == 1 { image.clone() } else { image.to_gray() };
        let dt = self.previous.as_ref().map(|p| stamp.secs() - p.stamp).filter(|dt| *dt > TIME_EPS);

        if let (Some(prev), Some(dt)) = (&self.previous, dt) {
            self.features = track_features(&prev.gray, &gray, &self.features, &self.cfg.tracker);
            filter.predict();
            log.pnp = Some(filter.pnp_update(&self.features, &nav_pose, dt));
            if self.cfg.photometric {
                let points: Vec<PhotometricPoint<f64>> = self
                    .out
                    .map
                    .recently_visited()
                    .iter()
                    .filter_map(|idx| self.out.map.cell(idx))
                    .flatten()
                    .filter(|p| p.rendered)
                    .map(|p| {
                        let pc = world_to_camera(&p.position, &prev.nav_pose, &prev.params);
                        let prev_pixel: Option<Vector2<f64>> = (pc.z > MIN_DEPTH).then(|| pinhole(&pc, &prev.params.intrinsics));
                        PhotometricPoint { position: p.position, color: p.color, prev_pixel }
                    })
                    .collect();
                log.photometric = Some(filter.photometric_update(&points, &image, &nav_pose, dt));
            }
        }

        let params = *filter.params();
        log.rendered = render(&mut self.out.map, &image, &params, &nav_pose, &self.cfg.render).colored;
        let recent = extract_recent_points(&self.out.map);
        promote_features(&mut self.features, &recent, &nav_pose, &params, gray.width, gray.height, &self.cfg.promotion);
        log.features = self.features.len();
        self.out.camera_history.push((stamp.secs(), params));
        self.previous = Some(PreviousImage { stamp: stamp.secs(), gray, nav_pose, params });
    }

    pub fn finish(self) -> RunOutput {
        self.out
    }
}

/// Runs the whole pipeline over a time-ordered event stream whose image payloads index
/// into `frames`.
pub fn run_pipeline<E>(
    cfg: PipelineConfig,
    events: E,
    frames: &(impl FrameSource + ?Sized),
) -> Result<RunOutput, PipelineError>
where
    E: IntoIterator<Item = Result<Event<usize>, IoError>>,
{
    let mut pipeline = Pipeline::new(cfg);
    let mut recon = pipeline.reconstructor();
    for event in events {
        let packets = recon
            .push(event?)
            .map_err(|source| PipelineError::Sweep { packet: pipeline.out.packets.len(), source })?;
        for p in packets {
            pipeline.process(p, frames)?;
        }
    }
    for p in recon.flush() {
        pipeline.process(p, frames)?;
    }
    Ok(pipeline.finish())
}

/// An opened input.
pub enum Source {
    Dataset(Dataset),
    Simulation(Box<Simulation>),
}

impl Source {
    pub fn open(input: &Input) -> Result<Self, PipelineError> {
        Ok(match input {
            Input::Dataset(dir) => Source::Dataset(read_dataset(dir)?),
            Input::Simulation(path) => Source::Simulation(Box::new(Simulation::new(SimConfig::read(path)?))),
        })
    }

    pub fn groundtruth(&self) -> Result<Option<TrajectoryRecord>, PipelineError> {
        Ok(match self {
            Source::Dataset(d) => d.groundtruth()?,
            Source::Simulation(s) => Some(s.groundtruth()),
        })
    }

    pub fn run(&self, cfg: PipelineConfig) -> Result<RunOutput, PipelineError> {
        match self {
            Source::Dataset(d) => run_pipeline(cfg, d.events(), &d.frames()),
            Source::Simulation(s) => run_pipeline(cfg, s.events().map(Ok), s.as_ref()),
        }
    }
}
