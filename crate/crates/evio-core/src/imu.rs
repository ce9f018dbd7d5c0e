//! IMU pre-integration and motion prediction.
//!
//! Measurement model: gyro = body rate + bias + noise; accel = specific force
//! in the body frame + bias + noise. Specific force means gravity is included
//! in the reading: a stationary sensor at identity attitude reads exactly
//! `+g_w`. Pre-integration therefore leaves gravity out; it re-enters in the
//! prediction and residual equations with the world-frame `g_w`.
//!
//! The deltas (alpha, beta, gamma) are position, velocity and rotation
//! accumulated in the body frame of the first sample, by midpoint integration
//! of bias-corrected measurements. First-order Jacobians with respect to the
//! linearization biases allow cheap correction when bias estimates move.

use crate::geometry::Pose;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

/// One inertial sample; angular rate in rad/s, specific force in m/s^2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_us: u64,
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuBias {
    pub gyro: Vector3<f64>,
    pub accel: Vector3<f64>,
}

/// World-frame gravity in the specific-force convention: the vector a
/// stationary accelerometer at identity attitude reads. Z-up worlds use
/// (0, 0, +9.81).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GravityModel {
    pub g_w: Vector3<f64>,
}

impl Default for GravityModel {
    fn default() -> Self {
        Self {
            g_w: Vector3::new(0.0, 0.0, 9.81),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ImuError {
    #[error("pre-integration needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("samples must be strictly increasing in time")]
    NonMonotonicTime,
}

/// Pre-integrated motion between two instants, in the first sample's body
/// frame, with first-order bias sensitivities.
#[derive(Debug, Clone)]
pub struct Preintegration {
    /// Integrated time span in seconds.
    pub dt_s: f64,
    /// Position delta (double integral of rotated specific force).
    pub alpha: Vector3<f64>,
    /// Velocity delta.
    pub beta: Vector3<f64>,
    /// Rotation from the last body frame into the first.
    pub gamma: UnitQuaternion<f64>,
    /// Bias values the deltas were integrated with.
    pub bias_lin: ImuBias,
    pub j_alpha_bg: Matrix3<f64>,
    pub j_alpha_ba: Matrix3<f64>,
    pub j_beta_bg: Matrix3<f64>,
    pub j_beta_ba: Matrix3<f64>,
    pub j_gamma_bg: Matrix3<f64>,
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Right Jacobian of the SO(3) exponential at rotation vector `phi`.
fn so3_right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let px = skew(phi);
    if theta < 1e-8 {
        return Matrix3::identity() - 0.5 * px + px * px / 6.0;
    }
    let t2 = theta * theta;
    Matrix3::identity() - px * ((1.0 - theta.cos()) / t2)
        + (px * px) * ((theta - theta.sin()) / (t2 * theta))
}

/// Midpoint pre-integration of `samples` under fixed `bias`.
///
/// Deltas are independent of the absolute start pose and velocity; gravity is
/// not involved. Consecutive spans concatenate: integrating [a..b] and [b..c]
/// and chaining predictions equals integrating [a..c].
pub fn preintegrate(samples: &[ImuSample], bias: &ImuBias) -> Result<Preintegration, ImuError> {
    if samples.len() < 2 {
        return Err(ImuError::TooFewSamples(samples.len()));
    }
    let mut pre = Preintegration {
        dt_s: 0.0,
        alpha: Vector3::zeros(),
        beta: Vector3::zeros(),
        gamma: UnitQuaternion::identity(),
        bias_lin: *bias,
        j_alpha_bg: Matrix3::zeros(),
        j_alpha_ba: Matrix3::zeros(),
        j_beta_bg: Matrix3::zeros(),
        j_beta_ba: Matrix3::zeros(),
        j_gamma_bg: Matrix3::zeros(),
    };
    for pair in samples.windows(2) {
        let (s0, s1) = (&pair[0], &pair[1]);
        if s1.t_us <= s0.t_us {
            return Err(ImuError::NonMonotonicTime);
        }
        let dt = (s1.t_us - s0.t_us) as f64 * 1e-6;

        let w_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro;
        let phi = w_mid * dt;
        let dq = UnitQuaternion::from_scaled_axis(phi);
        let gamma_next =
            UnitQuaternion::new_normalize((pre.gamma * dq).into_inner());

        let r0 = pre.gamma.to_rotation_matrix().into_inner();
        let r1 = gamma_next.to_rotation_matrix().into_inner();
        let a0 = s0.accel - bias.accel;
        let a1 = s1.accel - bias.accel;
        let acc_mid = 0.5 * (r0 * a0 + r1 * a1);

        // Rotation bias Jacobian first; the new value feeds the accel terms.
        let j_gamma_next =
            dq.to_rotation_matrix().into_inner().transpose() * pre.j_gamma_bg
                - so3_right_jacobian(&phi) * dt;

        // d(acc_mid)/d(bg) via R exp([J db]) a ≈ R a - R [a]x J db.
        let dacc_dbg = -0.5 * (r0 * skew(&a0) * pre.j_gamma_bg + r1 * skew(&a1) * j_gamma_next);
        let dacc_dba = -0.5 * (r0 + r1);

        pre.j_alpha_bg += pre.j_beta_bg * dt + dacc_dbg * (0.5 * dt * dt);
        pre.j_alpha_ba += pre.j_beta_ba * dt + dacc_dba * (0.5 * dt * dt);
        pre.j_beta_bg += dacc_dbg * dt;
        pre.j_beta_ba += dacc_dba * dt;
        pre.j_gamma_bg = j_gamma_next;

        pre.alpha += pre.beta * dt + acc_mid * (0.5 * dt * dt);
        pre.beta += acc_mid * dt;
        pre.gamma = gamma_next;
        pre.dt_s += dt;
    }
    Ok(pre)
}

/// First-order re-linearization of the deltas at a new bias.
pub fn correct_for_bias_delta(pre: &Preintegration, bias: &ImuBias) -> Preintegration {
    let dbg = bias.gyro - pre.bias_lin.gyro;
    let dba = bias.accel - pre.bias_lin.accel;
    let mut out = pre.clone();
    out.alpha += pre.j_alpha_bg * dbg + pre.j_alpha_ba * dba;
    out.beta += pre.j_beta_bg * dbg + pre.j_beta_ba * dba;
    out.gamma = UnitQuaternion::new_normalize(
        (pre.gamma * UnitQuaternion::from_scaled_axis(pre.j_gamma_bg * dbg)).into_inner(),
    );
    out.bias_lin = *bias;
    out
}

/// Propagates pose and velocity across a pre-integrated span.
pub fn predict_motion(
    pose: &Pose,
    velocity: &Vector3<f64>,
    pre: &Preintegration,
    gravity: &GravityModel,
) -> (Pose, Vector3<f64>) {
    let dt = pre.dt_s;
    let r = pose.rotation;
    let p_next = pose.translation + velocity * dt - 0.5 * gravity.g_w * dt * dt + r * pre.alpha;
    let v_next = velocity - gravity.g_w * dt + r * pre.beta;
    let q_next = UnitQuaternion::new_normalize((r * pre.gamma).into_inner());
    (Pose::new(q_next, p_next), v_next)
}
