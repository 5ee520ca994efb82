use nalgebra::Vector3;

use crate::geometry::{integrate_imu_path, interpolate_pose, ImuSample, MotionState, RigidTransform, TIME_EPS};
use crate::sweep::{LidarPoint, ReconstructedSweep};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Deskewed {
    /// Points expressed in the LiDAR frame at the sweep end, in input order.
    pub points: Vec<Vector3<f64>>,
    pub intensities: Vec<f64>,
    /// Points whose stamps fall outside the IMU-covered span.
    pub rejected: usize,
}

/// Moves every point from the LiDAR pose at its own stamp to the LiDAR pose at the sweep
/// end, using the IMU-integrated trajectory starting at `prev`.
pub fn compensate_motion(
    sweep: &ReconstructedSweep,
    prev: &MotionState<f64>,
    imu: &[ImuSample<f64>],
    lidar_to_imu: &RigidTransform<f64>,
    gravity: &Vector3<f64>,
) -> Deskewed {
    let path = integrate_imu_path(prev, imu, gravity);
    deskew_along(&sweep.points, sweep.end, &path, lidar_to_imu)
}

/// De-skews against an explicit stamped trajectory of world<-IMU poses.
pub fn deskew_along(
    points: &[LidarPoint],
    end: crate::geometry::Timestamp,
    path: &[MotionState<f64>],
    lidar_to_imu: &RigidTransform<f64>,
) -> Deskewed {
    let mut out = Deskewed::default();
    let (Some(first), Some(last)) = (path.first(), path.last()) else {
        out.rejected = points.len();
        return out;
    };
    let end_pose = if end.approx_eq(last.stamp) {
        last.pose
    } else {
        match pose_at(path, end) {
            Some(p) => p,
            None => {
                out.rejected = points.len();
                return out;
            }
        }
    };
    let end_lidar_inv = end_pose.compose(lidar_to_imu).inverse();
    out.points.reserve(points.len());
    for p in points {
        if p.stamp.secs() < first.stamp.secs() - TIME_EPS || p.stamp.secs() > last.stamp.secs() + TIME_EPS {
            out.rejected += 1;
            continue;
        }
        if p.stamp.approx_eq(end) {
            out.points.push(p.position);
            out.intensities.push(p.intensity);
            continue;
        }
        let pose = pose_at(path, p.stamp).expect("stamp inside covered span");
        let world = pose.apply(&lidar_to_imu.apply(&p.position));
        out.points.push(end_lidar_inv.apply(&world));
        out.intensities.push(p.intensity);
    }
    out
}

fn pose_at(path: &[MotionState<f64>], t: crate::geometry::Timestamp) -> Option<RigidTransform<f64>> {
    let idx = path.partition_point(|s| s.stamp.secs() < t.secs());
    if idx == 0 {
        return path.first().filter(|s| s.stamp.approx_eq(t)).map(|s| s.pose);
    }
    let b = path.get(idx).or_else(|| path.last())?;
    let a = &path[idx - 1];
    interpolate_pose(&a.pose, a.stamp, &b.pose, b.stamp, t).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Rotation, Timestamp};

    fn sweep(points: Vec<LidarPoint>, end: f64) -> ReconstructedSweep {
        ReconstructedSweep { points, begin: Timestamp(0.0), end: Timestamp(end), aligned_to_image: false }
    }

    fn readings(n: usize, dt: f64, a: Vector3<f64>) -> Vec<ImuSample<f64>> {
        (0..=n).map(|i| ImuSample::new(Timestamp(i as f64 * dt), Vector3::zeros(), a)).collect()
    }

    #[test]
    fn stationary_platform_leaves_points() {
        let g = Vector3::new(0.0, 0.0, -9.81);
        let pts: Vec<LidarPoint> = (0..10)
            .map(|i| LidarPoint::new(Vector3::new(i as f64, 1.0, 2.0), Timestamp(i as f64 * 0.01), 0.5))
            .collect();
        let ext = RigidTransform::new(Rotation::yaw(0.3), Vector3::new(0.1, 0.0, 0.05));
        let out = compensate_motion(&sweep(pts.clone(), 0.1), &MotionState::at_rest(Timestamp(0.0)), &readings(20, 0.005, -g), &ext, &g);
        assert_eq!(out.rejected, 0);
        for (a, b) in out.points.iter().zip(&pts) {
            assert!((a - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn translating_platform_shifts_early_points() {
        let mut prev = MotionState::at_rest(Timestamp(0.0));
        prev.velocity = Vector3::new(1.0, 0.0, 0.0);
        let p = Vector3::new(3.0, 0.5, 0.2);
        let pts = vec![LidarPoint::new(p, Timestamp(0.05), 1.0), LidarPoint::new(p, Timestamp(0.1), 1.0)];
        let out = compensate_motion(&sweep(pts, 0.1), &prev, &readings(20, 0.005, Vector3::zeros()), &RigidTransform::identity(), &Vector3::zeros());
        assert!((out.points[0] - (p + Vector3::new(-0.05, 0.0, 0.0))).norm() < 1e-12);
        assert_eq!(out.points[1], p);
    }

    #[test]
    fn empty_sweep_and_uncovered_points() {
        let g = Vector3::zeros();
        let out = compensate_motion(&sweep(vec![], 0.1), &MotionState::at_rest(Timestamp(0.0)), &readings(20, 0.005, g), &RigidTransform::identity(), &g);
        assert!(out.points.is_empty() && out.rejected == 0);
        let late = vec![LidarPoint::new(Vector3::x(), Timestamp(0.2), 1.0)];
        let out = compensate_motion(&sweep(late, 0.1), &MotionState::at_rest(Timestamp(0.0)), &readings(20, 0.005, g), &RigidTransform::identity(), &g);
        assert_eq!(out.rejected, 1);
    }
}
