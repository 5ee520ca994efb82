use std::collections::HashSet;

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen, Vector3};

use super::state::{motion_difference, symmetrize, NavState, StateCovariance, StateVector, ROT};
use super::voxel_map::{VoxelIndex, VoxelMap};
use crate::geometry::{skew, RigidTransform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegistrationConfig {
    /// Grid size for thinning the input points, meters.
    pub downsample: f64,
    pub neighbors: usize,
    /// Neighbors farther than this from the query are ignored, meters.
    pub max_neighbor_distance: f64,
    /// A neighborhood is planar when λ_min < ratio · λ_mid.
    pub planarity_ratio: f64,
    /// Every neighbor must lie within this distance of the fitted plane, meters.
    pub max_plane_spread: f64,
    /// Correspondences with larger point-to-plane distance are dropped, meters.
    pub max_residual: f64,
    /// Point-to-plane measurement standard deviation, meters.
    pub sigma: f64,
    pub max_iterations: usize,
    pub convergence: f64,
    /// Neighbor search is repeated only after an iteration moves the pose by more than
    /// this (rad and m combined); otherwise the previous planes are reused.
    pub research_step: f64,
    pub min_correspondences: usize,
    /// Pose covariance multiplier applied when registration is degenerate.
    pub degenerate_inflation: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            downsample: 0.25,
            neighbors: 5,
            max_neighbor_distance: 1.0,
            planarity_ratio: 0.1,
            max_plane_spread: 0.1,
            max_residual: 0.5,
            sigma: 0.03,
            max_iterations: 5,
            convergence: 1e-6,
            research_step: 0.01,
            min_correspondences: 10,
            degenerate_inflation: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegistrationStatus {
    /// Map was empty; the prediction is returned unchanged.
    Bootstrap,
    Converged { iterations: usize, correspondences: usize, rms: f64 },
    /// Too few correspondences; prediction returned with inflated pose covariance.
    Degenerate { correspondences: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationOutcome {
    pub state: NavState,
    pub status: RegistrationStatus,
}

impl RegistrationOutcome {
    pub fn is_degenerate(&self) -> bool {
        matches!(self.status, RegistrationStatus::Degenerate { .. })
    }
}

/// Keeps the first point falling in each grid cell.
pub fn grid_downsample(points: &[Vector3<f64>], cell: f64) -> Vec<Vector3<f64>> {
    if cell <= 0.0 {
        return points.to_vec();
    }
    let mut seen = HashSet::new();
    points.iter().filter(|p| seen.insert(VoxelIndex::of(p, cell))).copied().collect()
}

/// A fitted local plane `n · x = n · centroid`.
#[derive(Clone, Copy, Debug)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub centroid: Vector3<f64>,
}

/// Least-squares plane through `points` if they pass the planarity test.
pub fn fit_plane(points: &[Vector3<f64>], planarity_ratio: f64) -> Option<Plane> {
    if points.len() < 3 {
        return None;
    }
    let n = points.len() as f64;
    let centroid = points.iter().sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        cov += d * d.transpose();
    }
    cov /= n;
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (lmin, lmid) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[1]]);
    if lmid <= 0.0 || lmin > planarity_ratio * lmid {
        return None;
    }
    let normal = eig.eigenvectors.column(order[0]).normalize();
    Some(Plane { normal, centroid })
}

struct Correspondence {
    /// point in IMU frame
    body: Vector3<f64>,
    plane: Plane,
}

fn correspondences(
    body_points: &[Vector3<f64>],
    map: &VoxelMap,
    pose: &RigidTransform<f64>,
    cfg: &RegistrationConfig,
) -> Vec<Correspondence> {
    let mut out = Vec::with_capacity(body_points.len());
    let mut neighbors = Vec::with_capacity(cfg.neighbors);
    for q in body_points {
        let w = pose.apply(q);
        let found = map.nearest(&w, cfg.neighbors, cfg.max_neighbor_distance);
        if found.len() < cfg.neighbors {
            continue;
        }
        neighbors.clear();
        neighbors.extend(found.iter().map(|(_, p)| p.position));
        let Some(plane) = fit_plane(&neighbors, cfg.planarity_ratio) else { continue };
        if neighbors.iter().any(|n| plane.normal.dot(&(n - plane.centroid)).abs() > cfg.max_plane_spread) {
            continue;
        }
        if plane.normal.dot(&(w - plane.centroid)).abs() > cfg.max_residual {
            continue;
        }
        out.push(Correspondence { body: *q, plane });
    }
    out
}

/// Iterated error-state Kalman update of `predicted` against the map with point-to-plane
/// residuals. `points` are de-skewed and expressed in the LiDAR frame at the sweep end.
pub fn register(
    points: &[Vector3<f64>],
    map: &VoxelMap,
    predicted: &NavState,
    lidar_to_imu: &RigidTransform<f64>,
    cfg: &RegistrationConfig,
) -> RegistrationOutcome {
    if map.is_empty() {
        return RegistrationOutcome { state: predicted.clone(), status: RegistrationStatus::Bootstrap };
    }
    let body: Vec<Vector3<f64>> =
        grid_downsample(points, cfg.downsample).iter().map(|p| lidar_to_imu.apply(p)).collect();

    let degenerate = |count: usize| {
        let mut state = predicted.clone();
        let mut d = StateVector::repeat(1.0);
        d.fixed_rows_mut::<6>(ROT).fill(cfg.degenerate_inflation.sqrt());
        let d = StateCovariance::from_diagonal(&d);
        state.covariance = d * state.covariance * d;
        RegistrationOutcome { state, status: RegistrationStatus::Degenerate { correspondences: count } }
    };

    let Some(prior_info) = predicted.covariance.try_inverse() else {
        return degenerate(0);
    };
    let inv_var = 1.0 / (cfg.sigma * cfg.sigma);

    let mut current = predicted.motion;
    let mut posterior = predicted.covariance;
    let mut iterations = 0;
    let mut last_count = 0;
    let mut rms = 0.0;
    let mut corr = Vec::new();
    let mut search = true;
    for iter in 0..cfg.max_iterations.max(1) {
        iterations = iter + 1;
        if search {
            corr = correspondences(&body, map, &current.pose, cfg);
        }
        last_count = corr.len();
        if corr.len() < cfg.min_correspondences {
            return degenerate(corr.len());
        }

        // Only the pose block is observed: accumulate a 6x6 normal system.
        let rot = current.pose.rotation.matrix();
        let mut hth = SMatrix::<f64, 6, 6>::zeros();
        let mut hte = SVector::<f64, 6>::zeros();
        let mut sq = 0.0;
        for c in &corr {
            let n = c.plane.normal;
            let residual = n.dot(&(current.pose.apply(&c.body) - c.plane.centroid));
            let d_rot = -(n.transpose() * rot * skew(&c.body)).transpose();
            let mut h = SVector::<f64, 6>::zeros();
            h.fixed_rows_mut::<3>(0).copy_from(&d_rot);
            h.fixed_rows_mut::<3>(3).copy_from(&n);
            hth += h * h.transpose();
            hte += h * residual;
            sq += residual * residual;
        }
        rms = (sq / corr.len() as f64).sqrt();

        let mut info = prior_info;
        let mut pose_block = info.fixed_view_mut::<6, 6>(ROT, ROT);
        pose_block += hth * inv_var;
        let mut rhs: StateVector = prior_info * motion_difference(&current, &predicted.motion);
        let mut obs = StateVector::zeros();
        obs.fixed_rows_mut::<6>(0).copy_from(&(hte * inv_var));
        rhs += obs;
        let Some(chol) = info.cholesky() else { return degenerate(corr.len()) };
        let delta = -chol.solve(&rhs);
        posterior = chol.inverse();

        let step = NavState { motion: current, covariance: posterior };
        current = step.boxplus(&delta);
        search = delta.fixed_rows::<6>(ROT).norm() > cfg.research_step;
        if delta.norm() < cfg.convergence {
            break;
        }
    }
    symmetrize(&mut posterior);
    RegistrationOutcome {
        state: NavState { motion: current, covariance: posterior },
        status: RegistrationStatus::Converged { iterations, correspondences: last_count, rms },
    }
}
