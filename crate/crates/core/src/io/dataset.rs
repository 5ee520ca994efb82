//! Dataset directory:
//!
//! ```text
//! calib.txt          key-value rig description (extrinsics, intrinsics, distortion, rates)
//! imu.csv            stamp,wx,wy,wz,ax,ay,az
//! sweeps/NNNNNN.bin  little-endian records of f32 x,y,z,intensity + f64 stamp
//! images/STAMP.pgm   or .ppm, STAMP in seconds, shortest exact decimal form
//! groundtruth.txt    optional TUM trajectory
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use super::{read_pnm, read_tum, write_pnm, write_tum, FrameSource, IoError, KeyValues, TrajectoryRecord};
use crate::geometry::{ImuSample, RigidTransform, Timestamp};
use crate::sweep::{Event, LidarPoint, RawSweep};
use crate::vision::ImageFrame;

const RECORD: usize = 24;

/// Writes a dataset directory, creating it if needed. Sweeps and frames are consumed one
/// at a time so a long run never has to be held in memory.
pub fn write_dataset(
    dir: &Path,
    calib: &KeyValues,
    imu: &[ImuSample<f64>],
    sweeps: impl IntoIterator<Item = RawSweep>,
    frames: impl IntoIterator<Item = ImageFrame>,
    groundtruth: &[(f64, RigidTransform<f64>)],
) -> Result<(), IoError> {
    for sub in ["sweeps", "images"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| IoError::file(&p, e))?;
    }
    let p = dir.join("calib.txt");
    std::fs::write(&p, calib.to_string()).map_err(|e| IoError::file(&p, e))?;

    let p = dir.join("imu.csv");
    let mut w = csv::Writer::from_path(&p).map_err(|e| IoError::file(&p, e))?;
    w.write_record(["stamp", "wx", "wy", "wz", "ax", "ay", "az"]).map_err(|e| IoError::file(&p, e))?;
    for s in imu {
        let (g, a) = (s.angular_velocity, s.linear_acceleration);
        let row = [s.stamp.secs(), g.x, g.y, g.z, a.x, a.y, a.z].map(|v| v.to_string());
        w.write_record(&row).map_err(|e| IoError::file(&p, e))?;
    }
    w.flush().map_err(|e| IoError::file(&p, e))?;

    for (k, sweep) in sweeps.into_iter().enumerate() {
        let p = dir.join("sweeps").join(format!("{k:06}.bin"));
        let mut w = BufWriter::new(File::create(&p).map_err(|e| IoError::file(&p, e))?);
        let io = |e| IoError::file(&p, e);
        for pt in &sweep.points {
            for v in [pt.position.x, pt.position.y, pt.position.z, pt.intensity] {
                w.write_f32::<LittleEndian>(v as f32).map_err(io)?;
            }
            w.write_f64::<LittleEndian>(pt.stamp.secs()).map_err(io)?;
        }
        w.flush().map_err(io)?;
    }

    for frame in frames {
        let ext = if frame.channels == 1 { "pgm" } else { "ppm" };
        write_pnm(&dir.join("images").join(format!("{}.{ext}", frame.stamp.secs())), &frame)?;
    }

    if !groundtruth.is_empty() {
        write_tum(&dir.join("groundtruth.txt"), groundtruth)?;
    }
    Ok(())
}

/// An opened dataset. IMU readings are loaded eagerly; sweeps and images are read on
/// demand.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub dir: PathBuf,
    pub calib: KeyValues,
    pub imu: Vec<ImuSample<f64>>,
    pub images: Vec<(Timestamp, PathBuf)>,
    pub sweeps: Vec<PathBuf>,
}

fn sorted_entries(dir: &Path, keep: impl Fn(&str) -> bool) -> Result<Vec<PathBuf>, IoError> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| IoError::file(dir, e))? {
        let path = entry.map_err(|e| IoError::file(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()).is_some_and(&keep) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset, IoError> {
    let calib = KeyValues::read(&dir.join("calib.txt")).map_err(|e| e.in_file(&dir.join("calib.txt")))?;

    let p = dir.join("imu.csv");
    let mut r = csv::Reader::from_path(&p).map_err(|e| IoError::file(&p, e))?;
    let mut imu: Vec<ImuSample<f64>> = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |m: String| IoError::ParseFile { path: p.display().to_string(), line, message: m };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{f}`"))))
            .collect::<Result<_, _>>()?;
        if v.len() != 7 {
            return Err(bad(format!("expected 7 fields, got {}", v.len())));
        }
        if imu.last().is_some_and(|s| !(v[0] > s.stamp.secs())) {
            return Err(bad("stamps must strictly increase".into()));
        }
        imu.push(ImuSample::new(Timestamp(v[0]), Vector3::new(v[1], v[2], v[3]), Vector3::new(v[4], v[5], v[6])));
    }

    let mut images = Vec::new();
    for path in sorted_entries(&dir.join("images"), |e| e == "pgm" || e == "ppm")? {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let stamp: f64 = stem.parse().map_err(|_| IoError::file(&path, "file name is not a stamp"))?;
        images.push((Timestamp(stamp), path));
    }
    images.sort_by(|a, b| a.0.secs().total_cmp(&b.0.secs()));

    let sweeps = sorted_entries(&dir.join("sweeps"), |e| e == "bin")?;
    Ok(Dataset { dir: dir.to_path_buf(), calib, imu, images, sweeps })
}

pub fn read_sweep_points(path: &Path) -> Result<Vec<LidarPoint>, IoError> {
    let mut bytes = Vec::new();
    File::open(path).and_then(|f| BufReader::new(f).read_to_end(&mut bytes)).map_err(|e| IoError::file(path, e))?;
    if bytes.len() % RECORD != 0 {
        return Err(IoError::file(path, format!("size {} is not a multiple of {RECORD}", bytes.len())));
    }
    let mut r = bytes.as_slice();
    let mut out = Vec::with_capacity(bytes.len() / RECORD);
    while !r.is_empty() {
        let mut f = [0.0f64; 4];
        for v in &mut f {
            *v = r.read_f32::<LittleEndian>().map_err(|e| IoError::file(path, e))? as f64;
        }
        let stamp = r.read_f64::<LittleEndian>().map_err(|e| IoError::file(path, e))?;
        out.push(LidarPoint::new(Vector3::new(f[0], f[1], f[2]), Timestamp(stamp), f[3]));
    }
    Ok(out)
}

impl Dataset {
    pub fn groundtruth(&self) -> Result<Option<TrajectoryRecord>, IoError> {
        let p = self.dir.join("groundtruth.txt");
        p.exists().then(|| read_tum(&p)).transpose()
    }

    pub fn image_stamps(&self) -> Vec<Timestamp> {
        self.images.iter().map(|(s, _)| *s).collect()
    }

    /// Time-ordered events with the frame index as image payload.
    pub fn events(&self) -> DatasetEvents<'_> {
        DatasetEvents { data: self, imu: 0, image: 0, sweep: 0, points: Vec::new(), point: 0 }
    }

    pub fn frames(&self) -> DatasetFrames<'_> {
        DatasetFrames(self)
    }
}

/// Lazy merge of a dataset's sensor streams; same ordering rules as the in-memory merge.
pub struct DatasetEvents<'a> {
    data: &'a Dataset,
    imu: usize,
    image: usize,
    sweep: usize,
    points: Vec<LidarPoint>,
    point: usize,
}

impl Iterator for DatasetEvents<'_> {
    type Item = Result<Event<usize>, IoError>;

    fn next(&mut self) -> Option<Self::Item> {
        while self.point == self.points.len() && self.sweep < self.data.sweeps.len() {
            let path = &self.data.sweeps[self.sweep];
            self.sweep += 1;
            match read_sweep_points(path) {
                Ok(p) => {
                    self.points = p;
                    self.point = 0;
                }
                Err(e) => {
                    self.sweep = self.data.sweeps.len();
                    self.points.clear();
                    self.point = 0;
                    return Some(Err(e));
                }
            }
        }
        let heads = [
            self.data.imu.get(self.imu).map(|s| s.stamp.secs()),
            self.points.get(self.point).map(|p| p.stamp.secs()),
            self.data.images.get(self.image).map(|(s, _)| s.secs()),
        ];
        let mut best: Option<(usize, f64)> = None;
        for (i, h) in heads.iter().enumerate() {
            if let Some(t) = *h {
                if best.is_none_or(|(_, b)| t.total_cmp(&b).is_lt()) {
                    best = Some((i, t));
                }
            }
        }
        Some(Ok(match best?.0 {
            0 => {
                self.imu += 1;
                Event::Imu(self.data.imu[self.imu - 1])
            }
            1 => {
                self.point += 1;
                Event::Point(self.points[self.point - 1])
            }
            _ => {
                self.image += 1;
                Event::Image { stamp: self.data.images[self.image - 1].0, payload: self.image - 1 }
            }
        }))
    }
}

/// Loads dataset images by index.
pub struct DatasetFrames<'a>(&'a Dataset);

impl FrameSource for DatasetFrames<'_> {
    fn frame(&self, index: usize) -> Result<ImageFrame, IoError> {
        let (stamp, path) = self.0.images.get(index).ok_or_else(|| IoError::Invalid(format!("no frame {index}")))?;
        read_pnm(path, *stamp)
    }
}
