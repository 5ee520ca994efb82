//! File formats: flat key-value configs, TUM trajectories, binary PLY maps, PGM/PPM
//! images and the on-disk dataset layout.

mod dataset;
mod kv;
mod ply;
mod pnm;
mod tum;

pub use dataset::{read_dataset, read_sweep_points, write_dataset, Dataset, DatasetEvents, DatasetFrames};
pub use kv::{format_transform, KeyValues};
pub(crate) use kv::transform_from;
pub use ply::{read_ply, write_ply, write_ply_to, PlyVertex};
pub use pnm::{read_pnm, write_pnm};
pub use tum::{format_tum, parse_tum, read_tum, write_tum, TrajectoryRecord};

use crate::vision::ImageFrame;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("{path}: {message}")]
    File { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{path}:{line}: {message}")]
    ParseFile { path: String, line: usize, message: String },
    #[error("PLY header declares {declared} vertices but {written} were supplied")]
    PlyCount { declared: usize, written: usize },
    #[error("{0}")]
    Invalid(String),
}

impl IoError {
    pub(crate) fn file(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        IoError::File { path: path.display().to_string(), message: e.to_string() }
    }

    /// Attaches a file name to a line-level parse error.
    pub(crate) fn in_file(self, path: &std::path::Path) -> Self {
        match self {
            IoError::Parse { line, message } => IoError::ParseFile { path: path.display().to_string(), line, message },
            e => e,
        }
    }
}

/// Random access to the images of a run, by index, so frames are loaded or rendered only
/// when a packet needs them.
pub trait FrameSource {
    fn frame(&self, index: usize) -> Result<ImageFrame, IoError>;
}

impl FrameSource for [ImageFrame] {
    fn frame(&self, index: usize) -> Result<ImageFrame, IoError> {
        self.get(index).cloned().ok_or_else(|| IoError::Invalid(format!("no frame {index}")))
    }
}

impl FrameSource for Vec<ImageFrame> {
    fn frame(&self, index: usize) -> Result<ImageFrame, IoError> {
        self.as_slice().frame(index)
    }
}
