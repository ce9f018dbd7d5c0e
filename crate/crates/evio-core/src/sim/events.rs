//! Stereo event-stream and IMU synthesis from an analytic trajectory.
//!
//! Each camera is rendered to log intensity at an adaptive frame rate chosen
//! so no pixel moves more than a fraction of a pixel between frames. Per
//! pixel, a contrast-threshold state machine emits an event every time the
//! log intensity moves one threshold away from the level of the previous
//! event, with the firing time linearly interpolated inside the frame
//! interval. IMU samples come straight from the trajectory derivatives plus
//! bias and white noise.

use crate::events::{Event, EventStream};
use crate::geometry::{CameraIntrinsics, Pose, StereoRig};
use crate::imu::{GravityModel, ImuBias, ImuSample};
use crate::sim::scene::Scene;
use crate::sim::trajectory::SinusoidTrajectory;
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone)]
pub struct EventGenConfig {
    /// Log-intensity step that triggers a positive event.
    pub contrast_pos: f64,
    /// Log-intensity step that triggers a negative event.
    pub contrast_neg: f64,
    /// Target upper bound on per-frame image motion.
    pub max_px_per_frame: f64,
    pub min_render_hz: f64,
    pub max_render_hz: f64,
    /// Uniform noise events per pixel per second, random polarity.
    pub noise_rate_hz: f64,
    /// Offset inside the logarithm to keep dark pixels finite.
    pub log_eps: f64,
}

impl Default for EventGenConfig {
    fn default() -> Self {
        Self {
            contrast_pos: 0.2,
            contrast_neg: 0.2,
            max_px_per_frame: 0.5,
            min_render_hz: 100.0,
            max_render_hz: 2000.0,
            noise_rate_hz: 0.0,
            log_eps: 1e-2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ImuGenConfig {
    pub rate_hz: f64,
    pub bias: ImuBias,
    pub gyro_noise_std: f64,
    pub accel_noise_std: f64,
}

impl Default for ImuGenConfig {
    fn default() -> Self {
        Self {
            rate_hz: 1000.0,
            bias: ImuBias::default(),
            gyro_noise_std: 0.0,
            accel_noise_std: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GroundTruthSample {
    pub t_us: u64,
    pub pose: Pose,
    pub velocity: Vector3<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub left: EventStream,
    pub right: EventStream,
    pub imu: Vec<ImuSample>,
    pub groundtruth: Vec<GroundTruthSample>,
    pub render_hz: f64,
}

/// Upper bound on image-plane speed in px/s over sampled trajectory times.
pub fn peak_pixel_speed(
    scene: &Scene,
    traj: &SinusoidTrajectory,
    cam: &CameraIntrinsics,
    duration_s: f64,
) -> f64 {
    let f = cam.fx.max(cam.fy);
    let half_diag = 0.5 * ((cam.width as f64).powi(2) + (cam.height as f64).powi(2)).sqrt();
    let rot_gain = f + half_diag * half_diag / f;
    let mut peak: f64 = 0.0;
    for k in 0..=32 {
        let t = duration_s * k as f64 / 32.0;
        let rho_max = scene.max_inverse_depth(cam, &traj.pose(t), 16).max(1e-6);
        let v = traj.velocity(t).norm();
        let w = traj.angular_velocity_body(t).norm();
        peak = peak.max(f * v * rho_max + w * rot_gain);
    }
    peak
}

/// Per-camera contrast-threshold state over the rendered frames.
struct PixelBank {
    reference: Vec<f64>,
    previous: Vec<f64>,
}

impl PixelBank {
    fn new(first_frame: &[f64]) -> Self {
        Self {
            reference: first_frame.to_vec(),
            previous: first_frame.to_vec(),
        }
    }

    /// Emits the events implied by moving every pixel from the previous
    /// frame (at `t0_us`) to `frame` (at `t1_us`).
    fn advance(
        &mut self,
        frame: &[f64],
        width: usize,
        t0_us: u64,
        t1_us: u64,
        cfg: &EventGenConfig,
        out: &mut Vec<Event>,
    ) {
        let span = (t1_us - t0_us) as f64;
        for (idx, (&l1, l0)) in frame.iter().zip(self.previous.iter()).enumerate() {
            let l0 = *l0;
            if l1 == l0 {
                continue;
            }
            let polarity: i8 = if l1 > l0 { 1 } else { -1 };
            let threshold = if polarity > 0 {
                cfg.contrast_pos
            } else {
                cfg.contrast_neg
            };
            let mut level = self.reference[idx];
            loop {
                let target = level + f64::from(polarity) * threshold;
                let crossed = if polarity > 0 { l1 >= target } else { l1 <= target };
                if !crossed {
                    break;
                }
                let alpha = ((target - l0) / (l1 - l0)).clamp(0.0, 1.0);
                out.push(Event {
                    t_us: t0_us + (alpha * span).round() as u64,
                    x: (idx % width) as u16,
                    y: (idx / width) as u16,
                    polarity,
                });
                level = target;
            }
            self.reference[idx] = level;
        }
        self.previous.copy_from_slice(frame);
    }
}

fn sprinkle_noise(
    stream: &mut Vec<Event>,
    cam: &CameraIntrinsics,
    duration_s: f64,
    rate_hz: f64,
    rng: &mut impl Rng,
) {
    if rate_hz <= 0.0 {
        return;
    }
    let n = (rate_hz * duration_s * f64::from(cam.width) * f64::from(cam.height)).round() as usize;
    for _ in 0..n {
        stream.push(Event {
            t_us: rng.gen_range(0..(duration_s * 1e6) as u64),
            x: rng.gen_range(0..cam.width) as u16,
            y: rng.gen_range(0..cam.height) as u16,
            polarity: if rng.gen_bool(0.5) { 1 } else { -1 },
        });
    }
}

/// Renders the stereo pair along the trajectory and produces events, IMU
/// samples and ground truth over `[0, duration_s]`.
pub fn simulate_stereo(
    scene: &Scene,
    traj: &SinusoidTrajectory,
    rig: &StereoRig,
    duration_s: f64,
    event_cfg: &EventGenConfig,
    imu_cfg: &ImuGenConfig,
    gravity: &GravityModel,
    gt_rate_hz: f64,
    rng: &mut impl Rng,
) -> SimOutput {
    let cam = &rig.cam;
    let right_from_left = Pose::new(
        nalgebra::UnitQuaternion::identity(),
        Vector3::new(rig.baseline_m, 0.0, 0.0),
    );

    let speed = peak_pixel_speed(scene, traj, cam, duration_s);
    let render_hz = (speed / event_cfg.max_px_per_frame)
        .clamp(event_cfg.min_render_hz, event_cfg.max_render_hz);
    // At least one interval so a zero duration still yields defined (empty)
    // streams instead of 0/0 frame times.
    let n_frames = ((duration_s * render_hz).ceil() as usize).max(1);

    let mut events_left = Vec::new();
    let mut events_right = Vec::new();
    let mut bank_left: Option<PixelBank> = None;
    let mut bank_right: Option<PixelBank> = None;
    let mut scratch: Vec<Event> = Vec::new();
    let mut t_prev_us = 0u64;

    for k in 0..=n_frames {
        let t = duration_s * k as f64 / n_frames as f64;
        let t_us = (t * 1e6).round() as u64;
        let pose_left = traj.pose(t);
        let pose_right = pose_left.compose(&right_from_left);
        let frame_left = scene.render_log(cam, &pose_left, event_cfg.log_eps);
        let frame_right = scene.render_log(cam, &pose_right, event_cfg.log_eps);

        match (&mut bank_left, &mut bank_right) {
            (Some(bl), Some(br)) => {
                scratch.clear();
                bl.advance(
                    frame_left.data(),
                    cam.width as usize,
                    t_prev_us,
                    t_us,
                    event_cfg,
                    &mut scratch,
                );
                scratch.sort_by_key(|e| e.t_us);
                events_left.extend_from_slice(&scratch);

                scratch.clear();
                br.advance(
                    frame_right.data(),
                    cam.width as usize,
                    t_prev_us,
                    t_us,
                    event_cfg,
                    &mut scratch,
                );
                scratch.sort_by_key(|e| e.t_us);
                events_right.extend_from_slice(&scratch);
            }
            _ => {
                bank_left = Some(PixelBank::new(frame_left.data()));
                bank_right = Some(PixelBank::new(frame_right.data()));
            }
        }
        t_prev_us = t_us;
    }

    sprinkle_noise(&mut events_left, cam, duration_s, event_cfg.noise_rate_hz, rng);
    sprinkle_noise(&mut events_right, cam, duration_s, event_cfg.noise_rate_hz, rng);
    events_left.sort_by_key(|e| e.t_us);
    events_right.sort_by_key(|e| e.t_us);

    let imu = generate_imu(traj, duration_s, imu_cfg, gravity, rng);

    let n_gt = (duration_s * gt_rate_hz).ceil() as usize;
    let groundtruth = if n_gt == 0 {
        vec![GroundTruthSample {
            t_us: 0,
            pose: traj.pose(0.0),
            velocity: traj.velocity(0.0),
        }]
    } else {
        (0..=n_gt)
            .map(|k| {
                let t = duration_s * k as f64 / n_gt as f64;
                GroundTruthSample {
                    t_us: (t * 1e6).round() as u64,
                    pose: traj.pose(t),
                    velocity: traj.velocity(t),
                }
            })
            .collect()
    };

    SimOutput {
        left: EventStream {
            width: cam.width,
            height: cam.height,
            events: events_left,
        },
        right: EventStream {
            width: cam.width,
            height: cam.height,
            events: events_right,
        },
        imu,
        groundtruth,
        render_hz,
    }
}

/// IMU samples along the trajectory: body rate plus bias plus white noise,
/// and specific force (gravity included) in the body frame.
pub fn generate_imu(
    traj: &SinusoidTrajectory,
    duration_s: f64,
    cfg: &ImuGenConfig,
    gravity: &GravityModel,
    rng: &mut impl Rng,
) -> Vec<ImuSample> {
    let n = (duration_s * cfg.rate_hz).round() as usize;
    let gyro_noise = Normal::new(0.0, cfg.gyro_noise_std.max(1e-300)).unwrap();
    let accel_noise = Normal::new(0.0, cfg.accel_noise_std.max(1e-300)).unwrap();
    let noise3 = |dist: &Normal<f64>, rng: &mut dyn rand::RngCore| {
        Vector3::new(dist.sample(rng), dist.sample(rng), dist.sample(rng))
    };
    (0..=n)
        .map(|k| {
            let t = if n == 0 {
                0.0
            } else {
                duration_s * k as f64 / n as f64
            };
            let q = traj.rotation(t);
            let gyro = traj.angular_velocity_body(t) + cfg.bias.gyro + noise3(&gyro_noise, rng);
            let accel = q.inverse() * (traj.acceleration(t) + gravity.g_w)
                + cfg.bias.accel
                + noise3(&accel_noise, rng);
            ImuSample {
                t_us: (t * 1e6).round() as u64,
                gyro,
                accel,
            }
        })
        .collect()
}
