//! Synthetic stereo event + IMU data with exact ground truth.

pub mod events;
pub mod scene;
pub mod trajectory;

pub use events::{
    generate_imu, peak_pixel_speed, simulate_stereo, EventGenConfig, GroundTruthSample,
    ImuGenConfig, SimOutput,
};
pub use scene::{Plane, Scene, Texture};
pub use trajectory::SinusoidTrajectory;

use crate::geometry::{CameraIntrinsics, StereoRig};
use crate::imu::{GravityModel, ImuBias};
use crate::io::{config::ConfigMap, dataset as dataset_io, IoError};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Full description of one synthetic recording.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub rig: StereoRig,
    pub duration_s: f64,
    pub seed: u64,
    pub scene_kind: SceneKind,
    pub wall_distance_m: f64,
    pub texture_period_m: f64,
    pub trajectory: SinusoidTrajectory,
    pub event_cfg: EventGenConfig,
    pub imu_cfg: ImuGenConfig,
    pub gravity: GravityModel,
    pub gt_rate_hz: f64,
    /// Bias values written into the dataset as the estimator's starting
    /// guess; defaults to the true bias, so estimation starts calibrated.
    pub init_bias_guess: ImuBias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    DeskCorner,
    StripedWall,
    GridWall,
}

impl SimConfig {
    pub const KNOWN_KEYS: &'static [&'static str] = &[
        "width",
        "height",
        "fx",
        "fy",
        "cx",
        "cy",
        "baseline_m",
        "duration_s",
        "seed",
        "scene",
        "wall_distance_m",
        "texture_period_m",
        "contrast",
        "max_px_per_frame",
        "min_render_hz",
        "max_render_hz",
        "noise_rate_hz",
        "imu_rate_hz",
        "gyro_noise_std",
        "accel_noise_std",
        "bias_gyro",
        "bias_accel",
        "init_bias_gyro_guess",
        "init_bias_accel_guess",
        "gt_rate_hz",
        "traj_base",
        "traj_pos_amp",
        "traj_pos_freq",
        "traj_pos_phase",
        "traj_rot_amp",
        "traj_rot_freq",
        "traj_rot_phase",
    ];

    pub fn from_config(cfg: &ConfigMap) -> Result<Self, IoError> {
        cfg.ensure_known(Self::KNOWN_KEYS)?;
        let width = cfg.get_u32("width")?.unwrap_or(320);
        let height = cfg.get_u32("height")?.unwrap_or(240);
        let fx = cfg.get_f64("fx")?.unwrap_or(0.9 * f64::from(width));
        let fy = cfg.get_f64("fy")?.unwrap_or(fx);
        let cx = cfg.get_f64("cx")?.unwrap_or((f64::from(width) - 1.0) / 2.0);
        let cy = cfg.get_f64("cy")?.unwrap_or((f64::from(height) - 1.0) / 2.0);
        let rig = StereoRig {
            cam: CameraIntrinsics {
                width,
                height,
                fx,
                fy,
                cx,
                cy,
            },
            baseline_m: cfg.get_f64("baseline_m")?.unwrap_or(0.1),
        };

        let scene_kind = match cfg.get_str("scene").unwrap_or("desk") {
            "desk" => SceneKind::DeskCorner,
            "stripes" => SceneKind::StripedWall,
            "grid" => SceneKind::GridWall,
            other => {
                return Err(IoError::BadValue {
                    key: "scene".into(),
                    message: format!("unknown scene '{other}' (desk, stripes, grid)"),
                })
            }
        };

        let mut trajectory = SinusoidTrajectory::desk_default();
        if let Some(v) = cfg.get_vector3("traj_base")? {
            trajectory.base_position = v;
        }
        if let Some(v) = cfg.get_vector3("traj_pos_amp")? {
            trajectory.pos_amplitude_m = v;
        }
        if let Some(v) = cfg.get_vector3("traj_pos_freq")? {
            trajectory.pos_freq_hz = v;
        }
        if let Some(v) = cfg.get_vector3("traj_pos_phase")? {
            trajectory.pos_phase_rad = v;
        }
        if let Some(v) = cfg.get_vector3("traj_rot_amp")? {
            trajectory.rot_amplitude_rad = v;
        }
        if let Some(v) = cfg.get_vector3("traj_rot_freq")? {
            trajectory.rot_freq_hz = v;
        }
        if let Some(v) = cfg.get_vector3("traj_rot_phase")? {
            trajectory.rot_phase_rad = v;
        }

        let contrast = cfg.get_f64("contrast")?.unwrap_or(0.2);
        let defaults = EventGenConfig::default();
        let event_cfg = EventGenConfig {
            contrast_pos: contrast,
            contrast_neg: contrast,
            max_px_per_frame: cfg
                .get_f64("max_px_per_frame")?
                .unwrap_or(defaults.max_px_per_frame),
            min_render_hz: cfg.get_f64("min_render_hz")?.unwrap_or(defaults.min_render_hz),
            max_render_hz: cfg.get_f64("max_render_hz")?.unwrap_or(defaults.max_render_hz),
            noise_rate_hz: cfg.get_f64("noise_rate_hz")?.unwrap_or(0.0),
            log_eps: defaults.log_eps,
        };

        let bias = ImuBias {
            gyro: cfg.get_vector3("bias_gyro")?.unwrap_or_else(Vector3::zeros),
            accel: cfg.get_vector3("bias_accel")?.unwrap_or_else(Vector3::zeros),
        };
        let imu_cfg = ImuGenConfig {
            rate_hz: cfg.get_f64("imu_rate_hz")?.unwrap_or(1000.0),
            bias,
            gyro_noise_std: cfg.get_f64("gyro_noise_std")?.unwrap_or(0.0),
            accel_noise_std: cfg.get_f64("accel_noise_std")?.unwrap_or(0.0),
        };
        let init_bias_guess = ImuBias {
            gyro: cfg.get_vector3("init_bias_gyro_guess")?.unwrap_or(bias.gyro),
            accel: cfg
                .get_vector3("init_bias_accel_guess")?
                .unwrap_or(bias.accel),
        };

        Ok(Self {
            rig,
            duration_s: cfg.get_f64("duration_s")?.unwrap_or(2.0),
            seed: cfg.get_u64("seed")?.unwrap_or(1),
            scene_kind,
            wall_distance_m: cfg.get_f64("wall_distance_m")?.unwrap_or(2.0),
            texture_period_m: cfg.get_f64("texture_period_m")?.unwrap_or(0.24),
            trajectory,
            event_cfg,
            imu_cfg,
            gravity: GravityModel::default(),
            gt_rate_hz: cfg.get_f64("gt_rate_hz")?.unwrap_or(200.0),
            init_bias_guess,
        })
    }

    pub fn scene(&self) -> Scene {
        match self.scene_kind {
            SceneKind::DeskCorner => Scene::desk_corner(self.wall_distance_m),
            SceneKind::StripedWall => {
                Scene::striped_wall(self.wall_distance_m, self.texture_period_m)
            }
            SceneKind::GridWall => Scene::grid_wall(self.wall_distance_m, self.texture_period_m),
        }
    }

    pub fn run(&self) -> SimOutput {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        simulate_stereo(
            &self.scene(),
            &self.trajectory,
            &self.rig,
            self.duration_s,
            &self.event_cfg,
            &self.imu_cfg,
            &self.gravity,
            self.gt_rate_hz,
            &mut rng,
        )
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self::from_config(&ConfigMap::default()).unwrap()
    }
}

/// Writes a runnable dataset directory: binary events for both cameras, the
/// IMU log, the ground-truth trajectory and a `dataset.cfg` tying them
/// together with the calibration and the estimator's initial state.
pub fn write_dataset(cfg: &SimConfig, out: &SimOutput, dir: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(dir)?;
    dataset_io::write_events_evt1(&out.left, &dir.join("events_left.evt1"))?;
    dataset_io::write_events_evt1(&out.right, &dir.join("events_right.evt1"))?;
    dataset_io::write_imu_csv(&out.imu, &dir.join("imu.csv"))?;
    let gt: Vec<(f64, crate::geometry::Pose)> = out
        .groundtruth
        .iter()
        .map(|s| (s.t_us as f64 * 1e-6, s.pose))
        .collect();
    dataset_io::write_trajectory(&gt, &dir.join("groundtruth.txt"))?;

    let first = &out.groundtruth[0];
    let (p, q) = (first.pose.translation, first.pose.rotation);
    let v = first.velocity;
    let bg = cfg.init_bias_guess.gyro;
    let ba = cfg.init_bias_guess.accel;
    let cam = &cfg.rig.cam;
    let g = cfg.gravity.g_w;
    let text = format!(
        "# synthetic stereo event dataset\n\
         width = {}\nheight = {}\nfx = {}\nfy = {}\ncx = {}\ncy = {}\n\
         baseline_m = {}\n\
         gravity = {},{},{}\n\
         init_pose = {} {} {} {} {} {} {}\n\
         init_velocity = {},{},{}\n\
         init_bias_gyro = {},{},{}\n\
         init_bias_accel = {},{},{}\n\
         events_left = events_left.evt1\n\
         events_right = events_right.evt1\n\
         imu = imu.csv\n\
         groundtruth = groundtruth.txt\n",
        cam.width,
        cam.height,
        cam.fx,
        cam.fy,
        cam.cx,
        cam.cy,
        cfg.rig.baseline_m,
        g.x,
        g.y,
        g.z,
        p.x,
        p.y,
        p.z,
        q.i,
        q.j,
        q.k,
        q.w,
        v.x,
        v.y,
        v.z,
        bg.x,
        bg.y,
        bg.z,
        ba.x,
        ba.y,
        ba.z,
    );
    std::fs::write(dir.join("dataset.cfg"), text)?;
    Ok(())
}
