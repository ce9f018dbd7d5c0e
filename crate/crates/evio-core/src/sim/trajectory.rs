//! Smooth analytic camera trajectories with closed-form derivatives.
//!
//! Positions follow per-axis sinusoids; attitude follows sinusoidal
//! roll/pitch/yaw composed as Rz(yaw) Ry(pitch) Rx(roll). Every quantity an
//! inertial sensor measures (body rate, linear acceleration) is available
//! exactly, which makes the generated data self-consistent by construction.

use crate::geometry::Pose;
use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use std::f64::consts::TAU;

#[derive(Debug, Clone)]
pub struct SinusoidTrajectory {
    pub base_position: Vector3<f64>,
    pub pos_amplitude_m: Vector3<f64>,
    pub pos_freq_hz: Vector3<f64>,
    pub pos_phase_rad: Vector3<f64>,
    /// Roll, pitch, yaw amplitudes.
    pub rot_amplitude_rad: Vector3<f64>,
    pub rot_freq_hz: Vector3<f64>,
    pub rot_phase_rad: Vector3<f64>,
}

impl SinusoidTrajectory {
    /// Gentle desk-scale motion: centimetres of translation, a few degrees
    /// of rotation, sub-hertz frequencies.
    pub fn desk_default() -> Self {
        Self {
            base_position: Vector3::zeros(),
            pos_amplitude_m: Vector3::new(0.12, 0.08, 0.06),
            pos_freq_hz: Vector3::new(0.5, 0.4, 0.3),
            pos_phase_rad: Vector3::new(0.0, 1.1, 2.3),
            rot_amplitude_rad: Vector3::new(0.06, 0.05, 0.08),
            rot_freq_hz: Vector3::new(0.45, 0.35, 0.55),
            rot_phase_rad: Vector3::new(0.7, 0.0, 1.9),
        }
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.base_position
            + self.pos_amplitude_m.zip_zip_map(
                &self.pos_freq_hz,
                &self.pos_phase_rad,
                |a, f, p| a * (TAU * f * t + p).sin(),
            )
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.pos_amplitude_m
            .zip_zip_map(&self.pos_freq_hz, &self.pos_phase_rad, |a, f, p| {
                a * TAU * f * (TAU * f * t + p).cos()
            })
    }

    pub fn acceleration(&self, t: f64) -> Vector3<f64> {
        self.pos_amplitude_m
            .zip_zip_map(&self.pos_freq_hz, &self.pos_phase_rad, |a, f, p| {
                -a * (TAU * f) * (TAU * f) * (TAU * f * t + p).sin()
            })
    }

    fn euler(&self, t: f64) -> Vector3<f64> {
        self.rot_amplitude_rad
            .zip_zip_map(&self.rot_freq_hz, &self.rot_phase_rad, |a, f, p| {
                a * (TAU * f * t + p).sin()
            })
    }

    fn euler_rates(&self, t: f64) -> Vector3<f64> {
        self.rot_amplitude_rad
            .zip_zip_map(&self.rot_freq_hz, &self.rot_phase_rad, |a, f, p| {
                a * TAU * f * (TAU * f * t + p).cos()
            })
    }

    pub fn rotation(&self, t: f64) -> UnitQuaternion<f64> {
        let e = self.euler(t);
        UnitQuaternion::from_euler_angles(e.x, e.y, e.z)
    }

    pub fn pose(&self, t: f64) -> Pose {
        Pose::new(self.rotation(t), self.position(t))
    }

    /// Body-frame angular velocity consistent with `rotation`.
    ///
    /// For R = Rz(yaw) Ry(pitch) Rx(roll), the body rate stacks the Euler
    /// rates through the inverses of the already-applied primitive rotations.
    pub fn angular_velocity_body(&self, t: f64) -> Vector3<f64> {
        let e = self.euler(t);
        let de = self.euler_rates(t);
        let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), e.x);
        let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), e.y);
        Vector3::new(de.x, 0.0, 0.0)
            + rx.inverse() * (Vector3::new(0.0, de.y, 0.0) + ry.inverse() * Vector3::new(0.0, 0.0, de.z))
    }
}
