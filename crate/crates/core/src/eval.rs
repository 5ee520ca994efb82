//! Trajectory metrics.

use nalgebra::{Matrix3, Vector3};

use crate::geometry::RigidTransform;

/// Largest stamp difference accepted when pairing an estimate with a ground-truth pose.
pub const ASSOCIATION_GATE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("only {found} poses could be associated within {gate} s, need at least 3")]
    InsufficientOverlap { found: usize, gate: f64 },
    #[error("need at least 2 poses, got {0}")]
    TooFewPoses(usize),
}

/// Result of [`compute_ate`].
#[derive(Clone, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub associations: usize,
    /// Maps the estimate onto the ground truth.
    pub alignment: RigidTransform<f64>,
}

/// Index of the ground-truth stamp nearest to `t` in the sorted `stamps`.
fn nearest(stamps: &[f64], t: f64) -> Option<usize> {
    let i = stamps.partition_point(|&s| s < t);
    [i.checked_sub(1), (i < stamps.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|&a, &b| (stamps[a] - t).abs().total_cmp(&(stamps[b] - t).abs()))
}

/// Pairs of (estimate, ground truth) positions associated by nearest stamp.
pub fn associate(
    traj: &[(f64, RigidTransform<f64>)],
    gt: &[(f64, RigidTransform<f64>)],
    gate: f64,
) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    let stamps: Vec<f64> = gt.iter().map(|(t, _)| *t).collect();
    traj.iter()
        .filter_map(|(t, pose)| {
            let j = nearest(&stamps, *t)?;
            ((stamps[j] - t).abs() <= gate).then(|| (pose.translation, gt[j].1.translation))
        })
        .collect()
}

/// Least-squares rigid transform `T` (no scale) minimizing `Σ |T·a_i − b_i|²`.
pub fn align_rigid(pairs: &[(Vector3<f64>, Vector3<f64>)]) -> RigidTransform<f64> {
    let n = pairs.len().max(1) as f64;
    let ca = pairs.iter().map(|(a, _)| a).sum::<Vector3<f64>>() / n;
    let cb = pairs.iter().map(|(_, b)| b).sum::<Vector3<f64>>() / n;
    let h: Matrix3<f64> = pairs.iter().map(|(a, b)| (b - cb) * (a - ca).transpose()).sum();
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let d = (u * v_t).determinant().signum();
    let r = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * v_t;
    let rotation = crate::geometry::Rotation::from_matrix(&r);
    RigidTransform::new(rotation, cb - r * ca)
}

/// Absolute translational error: nearest-stamp association within
/// [`ASSOCIATION_GATE`], rigid alignment of the estimate onto the ground truth, then RMSE
/// of the position residuals.
pub fn compute_ate(traj: &[(f64, RigidTransform<f64>)], gt: &[(f64, RigidTransform<f64>)]) -> Result<AteReport, EvalError> {
    let pairs = associate(traj, gt, ASSOCIATION_GATE);
    if pairs.len() < 3 {
        return Err(EvalError::InsufficientOverlap { found: pairs.len(), gate: ASSOCIATION_GATE });
    }
    let alignment = align_rigid(&pairs);
    let sq: f64 = pairs.iter().map(|(a, b)| (alignment.apply(a) - b).norm_squared()).sum();
    Ok(AteReport { rmse: (sq / pairs.len() as f64).sqrt(), associations: pairs.len(), alignment })
}

/// Distance between the first and last positions.
pub fn end_to_end_error(traj: &[(f64, RigidTransform<f64>)]) -> Result<f64, EvalError> {
    match (traj.first(), traj.last()) {
        (Some(a), Some(b)) if traj.len() >= 2 => Ok((b.1.translation - a.1.translation).norm()),
        _ => Err(EvalError::TooFewPoses(traj.len())),
    }
}
