use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use super::SimError;
use crate::geometry::{RigidTransform, Rotation};

/// Pose and its derivatives at one instant. Velocity and acceleration are in the world
/// frame, angular velocity in the body frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinematics {
    pub pose: RigidTransform<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub angular_velocity: Vector3<f64>,
}

/// Closed loop around `center`. Progress along the loop follows
/// `θ(s) = 2πL(s − sin(2πs)/2π)` with `s = t/duration`, so the platform starts and ends at
/// rest and every derivative is analytic. Height, roll and pitch oscillate with the loop
/// angle, which keeps the loop closed for integer cycle counts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Orbit {
    pub center: Vector3<f64>,
    pub radius: f64,
    pub duration: f64,
    pub laps: f64,
    pub height_amplitude: f64,
    pub height_cycles: f64,
    pub roll_amplitude: f64,
    pub pitch_amplitude: f64,
    pub tilt_cycles: f64,
    /// Heading relative to the direction of travel, radians.
    pub yaw_offset: f64,
}

impl Default for Orbit {
    fn default() -> Self {
        Self {
            center: Vector3::new(0.0, 0.0, 1.5),
            radius: 4.0,
            duration: 30.0,
            laps: 1.0,
            height_amplitude: 0.3,
            height_cycles: 3.0,
            roll_amplitude: 0.05,
            pitch_amplitude: 0.05,
            tilt_cycles: 2.0,
            yaw_offset: 0.0,
        }
    }
}

impl Orbit {
    /// Loop angle and its first two time derivatives.
    fn phase(&self, t: f64) -> (f64, f64, f64) {
        let t = t.clamp(0.0, self.duration);
        let s = t / self.duration;
        let k = 2.0 * PI * self.laps;
        let w = 2.0 * PI / self.duration;
        (
            k * (s - (2.0 * PI * s).sin() / (2.0 * PI)),
            k / self.duration * (1.0 - (2.0 * PI * s).cos()),
            k / self.duration * w * (2.0 * PI * s).sin(),
        )
    }

    fn kinematics(&self, t: f64) -> Kinematics {
        let (th, dth, ddth) = self.phase(t);
        let (r, a, k) = (self.radius, self.height_amplitude, self.height_cycles);
        let (s, c) = th.sin_cos();
        let position = self.center + Vector3::new(r * c, r * s, a * (k * th).sin());
        let tangent = Vector3::new(-r * s, r * c, a * k * (k * th).cos());
        let curvature = Vector3::new(-r * c, -r * s, -a * k * k * (k * th).sin());
        let velocity = tangent * dth;
        let acceleration = tangent * ddth + curvature * dth * dth;

        // yaw ψ, pitch β, roll φ with R = Rz(ψ) Ry(β) Rx(φ)
        let m = self.tilt_cycles;
        let psi = th + PI / 2.0 + self.yaw_offset;
        let beta = self.pitch_amplitude * (m * th + 0.7).sin();
        let phi = self.roll_amplitude * (m * th).sin();
        let dpsi = dth;
        let dbeta = self.pitch_amplitude * m * (m * th + 0.7).cos() * dth;
        let dphi = self.roll_amplitude * m * (m * th).cos() * dth;
        let rot: Matrix3<f64> = Rotation::yaw(psi).matrix()
            * Rotation::from_axis_angle(&Vector3::y(), beta).matrix()
            * Rotation::from_axis_angle(&Vector3::x(), phi).matrix();
        let angular_velocity = Vector3::new(
            dphi - dpsi * beta.sin(),
            dbeta * phi.cos() + dpsi * phi.sin() * beta.cos(),
            -dbeta * phi.sin() + dpsi * phi.cos() * beta.cos(),
        );
        Kinematics {
            pose: RigidTransform::new(Rotation::from_matrix(&rot), position),
            velocity,
            acceleration,
            angular_velocity,
        }
    }
}

/// Ground-truth trajectory of the IMU frame.
#[derive(Clone, Debug, PartialEq)]
pub enum Trajectory {
    /// Stamped control poses joined by constant-rate slerp and linear segments. One
    /// keyframe gives a static platform.
    Keyframes(Vec<(f64, RigidTransform<f64>)>),
    Orbit(Orbit),
}

impl Trajectory {
    pub fn keyframes(frames: Vec<(f64, RigidTransform<f64>)>) -> Result<Self, SimError> {
        if frames.is_empty() {
            return Err(SimError::InvalidTrajectory("no keyframes".into()));
        }
        if frames.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(SimError::InvalidTrajectory("keyframe stamps must strictly increase".into()));
        }
        Ok(Trajectory::Keyframes(frames))
    }

    pub fn orbit(orbit: Orbit) -> Result<Self, SimError> {
        if !(orbit.duration > 0.0 && orbit.radius >= 0.0) {
            return Err(SimError::InvalidTrajectory("orbit needs a positive duration".into()));
        }
        Ok(Trajectory::Orbit(orbit))
    }

    pub fn start(&self) -> f64 {
        match self {
            Trajectory::Keyframes(k) => k[0].0,
            Trajectory::Orbit(_) => 0.0,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            Trajectory::Keyframes(k) => k[k.len() - 1].0,
            Trajectory::Orbit(o) => o.duration,
        }
    }

    pub fn pose(&self, t: f64) -> RigidTransform<f64> {
        self.kinematics(t).pose
    }

    /// State at `t`, clamped to the trajectory span (the platform rests outside it).
    pub fn kinematics(&self, t: f64) -> Kinematics {
        match self {
            Trajectory::Orbit(o) => o.kinematics(t),
            Trajectory::Keyframes(k) => {
                let rest = |pose| Kinematics {
                    pose,
                    velocity: Vector3::zeros(),
                    acceleration: Vector3::zeros(),
                    angular_velocity: Vector3::zeros(),
                };
                if k.len() == 1 || t <= k[0].0 {
                    return rest(k[0].1);
                }
                if t >= k[k.len() - 1].0 {
                    return rest(k[k.len() - 1].1);
                }
                let i = k.partition_point(|(s, _)| *s <= t) - 1;
                let ((t0, p0), (t1, p1)) = (k[i], k[i + 1]);
                let span = t1 - t0;
                let s = (t - t0) / span;
                let phi = p1.rotation.boxminus(&p0.rotation);
                Kinematics {
                    pose: RigidTransform::new(
                        p0.rotation.boxplus(&(phi * s)),
                        p0.translation + (p1.translation - p0.translation) * s,
                    ),
                    velocity: (p1.translation - p0.translation) / span,
                    acceleration: Vector3::zeros(),
                    angular_velocity: phi / span,
                }
            }
        }
    }
}
