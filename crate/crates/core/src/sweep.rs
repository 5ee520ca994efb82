//! Re-cuts the continuous LiDAR point stream into sweeps whose end stamps coincide with
//! image stamps.
//!
//! The reconstructor consumes one merged, timestamp-ordered event stream (points, image
//! stamps, IMU readings) and emits [`SyncedPacket`]s. How image stamps become sweep
//! boundaries depends on the camera/LiDAR frequency ratio, see [`Mode`].

use std::collections::VecDeque;

use nalgebra::Vector3;

use crate::geometry::{ImuSample, Timestamp, TIME_EPS};

/// Default number of closed sweeps that may wait for IMU coverage.
pub const DEFAULT_MAX_PENDING: usize = 64;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SweepError {
    #[error("out-of-order event: stamp {offending} after {previous}")]
    OutOfOrder { previous: f64, offending: f64 },
    #[error("{pending} closed sweeps are waiting for IMU data beyond {needed}")]
    ImuStarved { pending: usize, needed: f64 },
    #[error("invalid stream configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarPoint {
    /// meters, LiDAR frame at `stamp`
    pub position: Vector3<f64>,
    pub stamp: Timestamp,
    /// in [0, 1]
    pub intensity: f64,
}

impl LidarPoint {
    pub fn new(position: Vector3<f64>, stamp: Timestamp, intensity: f64) -> Self {
        Self { position, stamp, intensity }
    }
}

/// One sweep as delivered by the sensor.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSweep {
    pub points: Vec<LidarPoint>,
    pub begin: Timestamp,
    pub end: Timestamp,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructedSweep {
    pub points: Vec<LidarPoint>,
    pub begin: Timestamp,
    pub end: Timestamp,
    pub aligned_to_image: bool,
}

/// A reconstructed sweep bundled with the IMU readings that cover it and, when the sweep
/// ends at an image stamp, that image.
///
/// `imu` starts with a reading interpolated at the previous packet end and finishes with one
/// interpolated exactly at `sweep.end`.
#[derive(Clone, Debug)]
pub struct SyncedPacket<I> {
    pub sweep: ReconstructedSweep,
    pub image: Option<I>,
    pub image_stamp: Option<Timestamp>,
    pub imu: Vec<ImuSample<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StreamConfig {
    pub lidar_sweep_hz: f64,
    pub camera_hz: f64,
    /// Fraction of the raw sweep period that a slow-camera sweep must span before it may
    /// end at an image.
    pub min_fraction: f64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self { lidar_sweep_hz: 10.0, camera_hz: 15.0, min_fraction: 0.5 }
    }
}

impl StreamConfig {
    pub fn validate(&self) -> Result<(), SweepError> {
        if !(self.lidar_sweep_hz > 0.0 && self.lidar_sweep_hz.is_finite()) {
            return Err(SweepError::InvalidConfig(format!("lidar_sweep_hz = {}", self.lidar_sweep_hz)));
        }
        if !(self.camera_hz > 0.0 && self.camera_hz.is_finite()) {
            return Err(SweepError::InvalidConfig(format!("camera_hz = {}", self.camera_hz)));
        }
        if !(self.min_fraction > 0.0 && self.min_fraction < 1.0) {
            return Err(SweepError::InvalidConfig(format!("min_fraction = {}", self.min_fraction)));
        }
        Ok(())
    }

    pub fn sweep_period(&self) -> f64 {
        1.0 / self.lidar_sweep_hz
    }
}

/// How image stamps are turned into sweep boundaries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Camera more than twice as fast as the LiDAR: images are thinned to at most twice the
    /// sweep rate and every kept image ends a sweep.
    Fast,
    /// Camera faster than the LiDAR but at most twice as fast: every image ends a sweep.
    Medium,
    /// Camera no faster than the LiDAR: sweeps close after one raw period unless an image is
    /// imminent, and images close a sweep only once it spans `min_fraction` of a period.
    Slow,
}

pub fn classify_mode(cfg: &StreamConfig) -> Mode {
    if cfg.camera_hz > 2.0 * cfg.lidar_sweep_hz {
        Mode::Fast
    } else if cfg.camera_hz > cfg.lidar_sweep_hz {
        Mode::Medium
    } else {
        Mode::Slow
    }
}

/// Greedy earliest-first thinning of image stamps to at most twice the sweep rate.
pub fn downsample_images(stamps: &[Timestamp], cfg: &StreamConfig) -> Vec<Timestamp> {
    let mut thinner = ImageThinner::new(cfg);
    stamps.iter().copied().filter(|&s| thinner.keep(s)).collect()
}

#[derive(Clone, Debug)]
struct ImageThinner {
    spacing: f64,
    last: Option<Timestamp>,
}

impl ImageThinner {
    fn new(cfg: &StreamConfig) -> Self {
        Self { spacing: 1.0 / (2.0 * cfg.lidar_sweep_hz), last: None }
    }

    fn keep(&mut self, stamp: Timestamp) -> bool {
        match self.last {
            Some(prev) if stamp.secs() < prev.secs() + self.spacing - TIME_EPS => false,
            _ => {
                self.last = Some(stamp);
                true
            }
        }
    }
}

/// One element of the merged input stream.
#[derive(Clone, Debug)]
pub enum Event<I> {
    Point(LidarPoint),
    Image { stamp: Timestamp, payload: I },
    Imu(ImuSample<f64>),
}

impl<I> Event<I> {
    pub fn stamp(&self) -> Timestamp {
        match self {
            Event::Point(p) => p.stamp,
            Event::Image { stamp, .. } => *stamp,
            Event::Imu(s) => s.stamp,
        }
    }

    /// Tie-break rank for equal stamps: IMU, then points, then images.
    fn rank(&self) -> u8 {
        match self {
            Event::Imu(_) => 0,
            Event::Point(_) => 1,
            Event::Image { .. } => 2,
        }
    }
}

/// Merges per-sensor streams into the single ordered stream the reconstructor expects.
///
/// The sort is stable; at equal stamps IMU readings come first, then points, then images, so
/// a point stamped exactly at an image time belongs to the sweep that image closes.
pub fn merge_streams<I>(
    sweeps: impl IntoIterator<Item = RawSweep>,
    images: impl IntoIterator<Item = (Timestamp, I)>,
    imu: impl IntoIterator<Item = ImuSample<f64>>,
) -> Vec<Event<I>> {
    let mut events: Vec<Event<I>> = imu.into_iter().map(Event::Imu).collect();
    events.extend(sweeps.into_iter().flat_map(|s| s.points.into_iter().map(Event::Point)));
    events.extend(images.into_iter().map(|(stamp, payload)| Event::Image { stamp, payload }));
    events.sort_by(|a, b| {
        a.stamp().secs().total_cmp(&b.stamp().secs()).then(a.rank().cmp(&b.rank()))
    });
    events
}

/// Lazy counterpart of [`merge_streams`] for per-sensor streams that are each already in
/// time order. Same tie-breaking.
pub struct MergedEvents<A: Iterator, B: Iterator, C: Iterator> {
    imu: std::iter::Peekable<A>,
    points: std::iter::Peekable<B>,
    images: std::iter::Peekable<C>,
}

impl<I, A, B, C> MergedEvents<A, B, C>
where
    A: Iterator<Item = ImuSample<f64>>,
    B: Iterator<Item = LidarPoint>,
    C: Iterator<Item = (Timestamp, I)>,
{
    pub fn new(imu: A, points: B, images: C) -> Self {
        Self { imu: imu.peekable(), points: points.peekable(), images: images.peekable() }
    }
}

impl<I, A, B, C> Iterator for MergedEvents<A, B, C>
where
    A: Iterator<Item = ImuSample<f64>>,
    B: Iterator<Item = LidarPoint>,
    C: Iterator<Item = (Timestamp, I)>,
{
    type Item = Event<I>;

    fn next(&mut self) -> Option<Event<I>> {
        let heads = [
            self.imu.peek().map(|s| s.stamp.secs()),
            self.points.peek().map(|p| p.stamp.secs()),
            self.images.peek().map(|(s, _)| s.secs()),
        ];
        // strict comparison keeps the lower rank on ties
        let mut best: Option<(usize, f64)> = None;
        for (i, h) in heads.iter().enumerate() {
            if let Some(t) = *h {
                if best.is_none_or(|(_, b)| t.total_cmp(&b).is_lt()) {
                    best = Some((i, t));
                }
            }
        }
        match best?.0 {
            0 => self.imu.next().map(Event::Imu),
            1 => self.points.next().map(Event::Point),
            _ => self.images.next().map(|(stamp, payload)| Event::Image { stamp, payload }),
        }
    }
}

struct ClosedSweep<I> {
    sweep: ReconstructedSweep,
    image: Option<(Timestamp, I)>,
}

/// Streaming sweep reconstructor.
pub struct Reconstructor<I> {
    cfg: StreamConfig,
    mode: Mode,
    require_imu: bool,
    max_pending: usize,
    thinner: ImageThinner,
    last_event: Option<Timestamp>,
    begin: Option<Timestamp>,
    open: VecDeque<LidarPoint>,
    pending: VecDeque<ClosedSweep<I>>,
    imu: VecDeque<ImuSample<f64>>,
    /// End of the last emitted packet; IMU coverage of the next packet starts here.
    imu_cursor: Option<Timestamp>,
    last_emitted_end: Option<Timestamp>,
}

impl<I> Reconstructor<I> {
    /// Reconstructor whose packets wait until IMU data reaches their end stamp.
    pub fn new(cfg: StreamConfig) -> Result<Self, SweepError> {
        cfg.validate()?;
        Ok(Self::with_mode(cfg, classify_mode(&cfg)))
    }

    /// Forces a mode, e.g. [`Mode::Slow`] when no camera stream exists.
    pub fn with_mode(cfg: StreamConfig, mode: Mode) -> Self {
        Self {
            cfg,
            mode,
            require_imu: true,
            max_pending: DEFAULT_MAX_PENDING,
            thinner: ImageThinner::new(&cfg),
            last_event: None,
            begin: None,
            open: VecDeque::new(),
            pending: VecDeque::new(),
            imu: VecDeque::new(),
            imu_cursor: None,
            last_emitted_end: None,
        }
    }

    /// Emit packets as soon as their sweep closes, whatever IMU data has arrived.
    pub fn without_imu_gating(mut self) -> Self {
        self.require_imu = false;
        self
    }

    pub fn with_max_pending(mut self, max_pending: usize) -> Self {
        self.max_pending = max_pending.max(1);
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    /// Number of points buffered in the open sweep.
    pub fn open_len(&self) -> usize {
        self.open.len()
    }

    pub fn push(&mut self, event: Event<I>) -> Result<Vec<SyncedPacket<I>>, SweepError> {
        let stamp = event.stamp();
        if let Some(prev) = self.last_event {
            if stamp.secs() < prev.secs() - TIME_EPS {
                return Err(SweepError::OutOfOrder { previous: prev.secs(), offending: stamp.secs() });
            }
        }
        self.last_event = Some(stamp);
        if self.begin.is_none() && !matches!(event, Event::Imu(_)) {
            self.begin = Some(stamp);
            self.imu_cursor.get_or_insert(stamp);
        }

        if self.mode == Mode::Slow {
            self.expire_until(stamp);
        }

        match event {
            Event::Point(p) => self.open.push_back(p),
            Event::Imu(s) => self.imu.push_back(s),
            Event::Image { stamp, payload } => self.on_image(stamp, payload),
        }

        let out = self.release(false);
        if self.pending.len() > self.max_pending {
            let needed = self.pending.front().map(|c| c.sweep.end.secs()).unwrap_or(f64::NAN);
            return Err(SweepError::ImuStarved { pending: self.pending.len(), needed });
        }
        self.trim_imu();
        Ok(out)
    }

    /// Ends the stream: releases every waiting packet and the open partial sweep.
    pub fn flush(&mut self) -> Vec<SyncedPacket<I>> {
        if self.mode == Mode::Slow {
            if let Some(last) = self.open.back().map(|p| p.stamp) {
                let period = self.cfg.sweep_period();
                while let Some(b) = self.begin {
                    let candidate = b + period;
                    if candidate.secs() < last.secs() - TIME_EPS {
                        self.close(candidate, None);
                    } else {
                        break;
                    }
                }
            }
        }
        if let (Some(first), Some(last)) = (self.open.front(), self.open.back()) {
            let begin = self.begin.unwrap_or(first.stamp);
            let mut end = last.stamp.secs().max(begin.secs());
            if end <= begin.secs() + TIME_EPS && self.last_emitted_end.is_some() {
                end = begin.secs() + 2.0 * TIME_EPS;
            }
            self.close(Timestamp(end), None);
        }
        self.release(true)
    }

    fn on_image(&mut self, stamp: Timestamp, payload: I) {
        let Some(begin) = self.begin else { return };
        match self.mode {
            Mode::Fast | Mode::Medium => {
                if self.mode == Mode::Fast && !self.thinner.keep(stamp) {
                    return;
                }
                if stamp.secs() > begin.secs() + TIME_EPS {
                    self.close(stamp, Some((stamp, payload)));
                }
            }
            Mode::Slow => {
                let min_span = self.cfg.min_fraction * self.cfg.sweep_period();
                if stamp - begin >= min_span - TIME_EPS {
                    self.close(stamp, Some((stamp, payload)));
                }
            }
        }
    }

    /// Closes every slow-mode sweep whose raw period has elapsed with no image inside the
    /// look-ahead window, given that the stream has reached `now`.
    fn expire_until(&mut self, now: Timestamp) {
        let period = self.cfg.sweep_period();
        let window = self.cfg.min_fraction * period;
        while let Some(b) = self.begin {
            let candidate = b + period;
            if now.secs() > candidate.secs() + window + TIME_EPS {
                self.close(candidate, None);
            } else {
                break;
            }
        }
    }

    fn close(&mut self, end: Timestamp, image: Option<(Timestamp, I)>) {
        let begin = self.begin.unwrap_or(end);
        let mut points = Vec::new();
        while let Some(p) = self.open.front() {
            if p.stamp.secs() <= end.secs() + TIME_EPS {
                points.push(self.open.pop_front().expect("front exists"));
            } else {
                break;
            }
        }
        self.begin = Some(end);
        if points.is_empty() {
            return;
        }
        let aligned = image.is_some();
        self.pending.push_back(ClosedSweep {
            sweep: ReconstructedSweep { points, begin, end, aligned_to_image: aligned },
            image,
        });
    }

    fn release(&mut self, force: bool) -> Vec<SyncedPacket<I>> {
        let mut out = Vec::new();
        while let Some(front) = self.pending.front() {
            let end = front.sweep.end;
            let covered = self.imu.back().is_some_and(|s| s.stamp.secs() >= end.secs() - TIME_EPS);
            if self.require_imu && !covered && !force {
                break;
            }
            let closed = self.pending.pop_front().expect("front exists");
            let start = self.imu_cursor.unwrap_or(closed.sweep.begin);
            let imu = self.imu_slice(start, end);
            self.imu_cursor = Some(end);
            self.last_emitted_end = Some(end);
            let (image_stamp, image) = match closed.image {
                Some((s, payload)) => (Some(s), Some(payload)),
                None => (None, None),
            };
            out.push(SyncedPacket { sweep: closed.sweep, image, image_stamp, imu });
        }
        out
    }

    /// Readings covering `[start, end]` with interpolated readings at both boundaries.
    fn imu_slice(&self, start: Timestamp, end: Timestamp) -> Vec<ImuSample<f64>> {
        if self.imu.is_empty() {
            return Vec::new();
        }
        let at = |t: Timestamp| -> ImuSample<f64> {
            let idx = self.imu.partition_point(|s| s.stamp.secs() <= t.secs());
            match (idx.checked_sub(1).and_then(|i| self.imu.get(i)), self.imu.get(idx)) {
                (Some(a), Some(b)) => ImuSample::lerp(a, b, t),
                (Some(a), None) => ImuSample { stamp: t, ..*a },
                (None, Some(b)) => ImuSample { stamp: t, ..*b },
                (None, None) => unreachable!("buffer is non-empty"),
            }
        };
        let mut out = vec![at(start)];
        out.extend(
            self.imu
                .iter()
                .filter(|s| s.stamp.secs() > start.secs() + TIME_EPS && s.stamp.secs() < end.secs() - TIME_EPS)
                .copied(),
        );
        out.push(at(end));
        out
    }

    /// Drops readings no longer needed to interpolate at the IMU cursor.
    fn trim_imu(&mut self) {
        let Some(cursor) = self.imu_cursor else {
            // keep only the latest reading before the stream has a start
            while self.imu.len() > 1 {
                self.imu.pop_front();
            }
            return;
        };
        while self.imu.len() > 1 && self.imu[1].stamp.secs() <= cursor.secs() {
            self.imu.pop_front();
        }
    }
}
