//! End-to-end odometry pipeline: event representations feed a semi-dense
//! stereo mapper and a direct tracker, IMU pre-integration bridges the ticks,
//! and a sliding-window solver refines velocity and sensor biases.
//!
//! Processing is organized in fixed-rate ticks. Every tick the tracker
//! registers the current inverse-depth map against the freshest negative
//! event surface, seeded by IMU dead reckoning. At a lower rate the mapper
//! rebuilds the point set from accumulated-activity frames (static stereo for
//! vertically structured contours, motion-parallax matching for the rest) and
//! fuses it into the propagated map. Lowest rate of all, the windowed solver
//! re-estimates velocity and IMU biases from the pre-integrated constraints
//! between recent tick poses.

use std::io::Write as _;
use std::path::Path;
use std::sync::mpsc;
use std::sync::Arc;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::backend::{BackendConfig, SlidingWindow, WindowNode};
use crate::geometry::{quaternion_to_cayley, CameraIntrinsics, MotionParams, Pose, StereoRig};
use crate::grid::Grid;
use crate::imu::{predict_motion, preintegrate, ImuBias, ImuSample};
use crate::io::dataset::Dataset;
use crate::io::{ConfigMap, IoError};
use crate::mapping::{
    static_stereo_match, temporal_stereo_match, LocalDepthMap, StereoMatchConfig,
    TemporalMatchConfig,
};
use crate::mapping::propagate_map;
use crate::representations::{
    build_aa, build_osts, build_time_surface, sample_contour_points, split_by_gradient,
    GradientSplitConfig, LastEventTimes, RegionGridConfig,
};
use crate::tracking::{pose_from_registration, track, RegistrationField, TrackConfig, TrackPoint};

/// Everything the tick loop needs, parsed from `key = value` text.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Tracker update rate.
    pub tick_hz: f64,
    /// Event history length for accumulated-activity frames.
    pub aa_window_us: u64,
    /// Time-surface decay constant.
    pub decay_us: f64,
    /// Blur width used to spread support into empty surface pixels.
    pub osts_sigma: f64,
    pub osts_radius: u32,
    /// Side length of the activity-convergence regions.
    pub region_size: u32,
    /// Fraction of the steady-state activity treated as converged.
    pub convergence_fraction: f64,
    /// Contour points drawn per mapping update.
    pub n_sample_points: usize,
    /// Image border kept free of samples.
    pub sample_margin: u32,
    /// Gradient-ratio split between static and motion-parallax matching.
    pub eta_threshold: f64,
    pub stereo_block: u32,
    pub max_disparity: u32,
    pub stereo_min_score: f64,
    pub stereo_min_margin: f64,
    pub temporal_rho_samples: u32,
    pub temporal_golden_iters: u32,
    /// Skip motion-parallax matching when the camera moved less than this
    /// between mapping updates: tiny baselines give noise-dominated depth.
    pub temporal_min_baseline_m: f64,
    /// Inverse-depth search range for motion-parallax matching.
    pub rho_min: f64,
    pub rho_max: f64,
    /// Mapper cadence, in tracker ticks.
    pub map_interval_ticks: u32,
    pub max_map_points: usize,
    /// Variance growth applied at each map propagation, so old estimates
    /// stay open to revision instead of freezing at tiny fused variances.
    pub map_process_noise: f64,
    /// Points whose relative inverse-depth sigma exceeds this never reach
    /// the tracker (they stay in the map and may still fuse tighter).
    pub track_max_rel_sigma: f64,
    /// Cap on points handed to the tracker each tick.
    pub track_max_points: usize,
    /// Minimum in-view warped points for a trusted pose.
    pub track_min_inliers: usize,
    /// Maximum mean robust cost per point for a trusted pose.
    pub track_max_mean_cost: f64,
    /// Cost-gate multiplier applied while coasting: re-latching onto a
    /// converged registration beats integrating gyro/accel drift further.
    pub track_relaxed_cost_factor: f64,
    pub huber_delta: f64,
    /// Windowed-solver cadence, in tracker ticks.
    pub backend_interval_ticks: u32,
    /// Sliding-window capacity in nodes.
    pub window_size: usize,
    /// Longest stretch the pipeline may coast on dead reckoning.
    pub max_bridge_s: f64,
    /// Stereo matches required to accept the first map.
    pub bootstrap_min_points: usize,
    /// Give up if no map exists after this long.
    pub bootstrap_deadline_s: f64,
    pub seed: u64,
    /// 1 = fully sequential; more moves mapping onto a worker thread.
    pub threads: usize,
    /// Freeze velocity/bias at their initial values (no windowed solver).
    pub disable_backend: bool,
}

impl PipelineConfig {
    pub const KNOWN_KEYS: &'static [&'static str] = &[
        "tick_hz",
        "aa_window_us",
        "decay_us",
        "osts_sigma",
        "osts_radius",
        "region_size",
        "convergence_fraction",
        "n_sample_points",
        "sample_margin",
        "eta_threshold",
        "stereo_block",
        "max_disparity",
        "stereo_min_score",
        "stereo_min_margin",
        "temporal_rho_samples",
        "temporal_golden_iters",
        "temporal_min_baseline_m",
        "rho_min",
        "rho_max",
        "map_interval_ticks",
        "max_map_points",
        "map_process_noise",
        "track_max_rel_sigma",
        "track_max_points",
        "track_min_inliers",
        "track_max_mean_cost",
        "track_relaxed_cost_factor",
        "huber_delta",
        "backend_interval_ticks",
        "window_size",
        "max_bridge_s",
        "bootstrap_min_points",
        "bootstrap_deadline_s",
        "seed",
        "threads",
        "disable_backend",
    ];

    pub fn from_config(cfg: &ConfigMap) -> Result<Self, IoError> {
        cfg.ensure_known(Self::KNOWN_KEYS)?;
        let d = Self::default();
        Ok(Self {
            tick_hz: cfg.get_f64("tick_hz")?.unwrap_or(d.tick_hz),
            aa_window_us: cfg.get_u64("aa_window_us")?.unwrap_or(d.aa_window_us),
            decay_us: cfg.get_f64("decay_us")?.unwrap_or(d.decay_us),
            osts_sigma: cfg.get_f64("osts_sigma")?.unwrap_or(d.osts_sigma),
            osts_radius: cfg.get_u32("osts_radius")?.unwrap_or(d.osts_radius),
            region_size: cfg.get_u32("region_size")?.unwrap_or(d.region_size),
            convergence_fraction: cfg
                .get_f64("convergence_fraction")?
                .unwrap_or(d.convergence_fraction),
            n_sample_points: cfg
                .get_usize("n_sample_points")?
                .unwrap_or(d.n_sample_points),
            sample_margin: cfg.get_u32("sample_margin")?.unwrap_or(d.sample_margin),
            eta_threshold: cfg.get_f64("eta_threshold")?.unwrap_or(d.eta_threshold),
            stereo_block: cfg.get_u32("stereo_block")?.unwrap_or(d.stereo_block),
            max_disparity: cfg.get_u32("max_disparity")?.unwrap_or(d.max_disparity),
            stereo_min_score: cfg
                .get_f64("stereo_min_score")?
                .unwrap_or(d.stereo_min_score),
            stereo_min_margin: cfg
                .get_f64("stereo_min_margin")?
                .unwrap_or(d.stereo_min_margin),
            temporal_rho_samples: cfg
                .get_u32("temporal_rho_samples")?
                .unwrap_or(d.temporal_rho_samples),
            temporal_golden_iters: cfg
                .get_u32("temporal_golden_iters")?
                .unwrap_or(d.temporal_golden_iters),
            temporal_min_baseline_m: cfg
                .get_f64("temporal_min_baseline_m")?
                .unwrap_or(d.temporal_min_baseline_m),
            rho_min: cfg.get_f64("rho_min")?.unwrap_or(d.rho_min),
            rho_max: cfg.get_f64("rho_max")?.unwrap_or(d.rho_max),
            map_interval_ticks: cfg
                .get_u32("map_interval_ticks")?
                .unwrap_or(d.map_interval_ticks),
            max_map_points: cfg.get_usize("max_map_points")?.unwrap_or(d.max_map_points),
            map_process_noise: cfg
                .get_f64("map_process_noise")?
                .unwrap_or(d.map_process_noise),
            track_max_rel_sigma: cfg
                .get_f64("track_max_rel_sigma")?
                .unwrap_or(d.track_max_rel_sigma),
            track_max_points: cfg
                .get_usize("track_max_points")?
                .unwrap_or(d.track_max_points),
            track_min_inliers: cfg
                .get_usize("track_min_inliers")?
                .unwrap_or(d.track_min_inliers),
            track_max_mean_cost: cfg
                .get_f64("track_max_mean_cost")?
                .unwrap_or(d.track_max_mean_cost),
            track_relaxed_cost_factor: cfg
                .get_f64("track_relaxed_cost_factor")?
                .unwrap_or(d.track_relaxed_cost_factor),
            huber_delta: cfg.get_f64("huber_delta")?.unwrap_or(d.huber_delta),
            backend_interval_ticks: cfg
                .get_u32("backend_interval_ticks")?
                .unwrap_or(d.backend_interval_ticks),
            window_size: cfg.get_usize("window_size")?.unwrap_or(d.window_size),
            max_bridge_s: cfg.get_f64("max_bridge_s")?.unwrap_or(d.max_bridge_s),
            bootstrap_min_points: cfg
                .get_usize("bootstrap_min_points")?
                .unwrap_or(d.bootstrap_min_points),
            bootstrap_deadline_s: cfg
                .get_f64("bootstrap_deadline_s")?
                .unwrap_or(d.bootstrap_deadline_s),
            seed: cfg.get_u64("seed")?.unwrap_or(d.seed),
            threads: cfg.get_usize("threads")?.unwrap_or(d.threads),
            disable_backend: cfg
                .get_bool("disable_backend")?
                .unwrap_or(d.disable_backend),
        })
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_config(&ConfigMap::load(path)?)
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if !(self.tick_hz > 0.0) {
            return Err(PipelineError::BadConfig("tick_hz must be positive".into()));
        }
        if self.threads == 0 || self.threads > 8 {
            return Err(PipelineError::BadConfig(
                "threads must be between 1 and 8".into(),
            ));
        }
        if self.rho_min <= 0.0 || self.rho_max <= self.rho_min {
            return Err(PipelineError::BadConfig(
                "inverse-depth range must satisfy 0 < rho_min < rho_max".into(),
            ));
        }
        if self.map_interval_ticks == 0 || self.backend_interval_ticks == 0 {
            return Err(PipelineError::BadConfig(
                "cadence settings must be at least 1 tick".into(),
            ));
        }
        if self.window_size < 2 {
            return Err(PipelineError::BadConfig(
                "window_size must be at least 2".into(),
            ));
        }
        if self.track_relaxed_cost_factor < 1.0 {
            return Err(PipelineError::BadConfig(
                "track_relaxed_cost_factor must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn stereo_cfg(&self) -> StereoMatchConfig {
        StereoMatchConfig {
            block: self.stereo_block,
            max_disparity: self.max_disparity,
            min_score: self.stereo_min_score,
            min_margin: self.stereo_min_margin,
            ..StereoMatchConfig::default()
        }
    }

    fn temporal_cfg(&self) -> TemporalMatchConfig {
        TemporalMatchConfig {
            block: self.stereo_block,
            rho_samples: self.temporal_rho_samples,
            min_score: self.stereo_min_score,
            min_margin: self.stereo_min_margin,
            golden_iters: self.temporal_golden_iters,
            ..TemporalMatchConfig::default()
        }
    }

    fn track_cfg(&self) -> TrackConfig {
        TrackConfig {
            huber_delta: self.huber_delta,
            min_points: self.track_min_inliers.min(8).max(4),
            ..TrackConfig::default()
        }
    }

    fn region_cfg(&self) -> RegionGridConfig {
        RegionGridConfig {
            region_size: self.region_size,
            convergence_fraction: self.convergence_fraction,
        }
    }

    fn split_cfg(&self) -> GradientSplitConfig {
        GradientSplitConfig {
            eta_threshold: self.eta_threshold,
            ..GradientSplitConfig::default()
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            tick_hz: 100.0,
            aa_window_us: 40_000,
            decay_us: 30_000.0,
            osts_sigma: 1.0,
            osts_radius: 2,
            region_size: 32,
            convergence_fraction: 0.95,
            n_sample_points: 220,
            sample_margin: 8,
            eta_threshold: 1.0,
            stereo_block: 15,
            max_disparity: 100,
            stereo_min_score: 0.6,
            stereo_min_margin: 0.1,
            temporal_rho_samples: 40,
            temporal_golden_iters: 16,
            temporal_min_baseline_m: 0.03,
            rho_min: 0.05,
            rho_max: 2.0,
            map_interval_ticks: 5,
            max_map_points: 2500,
            map_process_noise: 1.2,
            track_max_rel_sigma: 0.15,
            track_max_points: 400,
            track_min_inliers: 30,
            track_max_mean_cost: 0.15,
            track_relaxed_cost_factor: 2.0,
            huber_delta: 0.5,
            backend_interval_ticks: 10,
            window_size: 5,
            max_bridge_s: 0.5,
            bootstrap_min_points: 50,
            bootstrap_deadline_s: 1.5,
            seed: 7,
            threads: 1,
            disable_backend: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("no initial map by t={t_us} us: not enough stereo matches")]
    Bootstrap { t_us: u64 },
    #[error("tracking lost at t={t_us} us: dead reckoning exceeded the bridge limit")]
    TrackingLost { t_us: u64 },
}

/// Per-tick health record.
#[derive(Debug, Clone, Copy)]
pub struct TickDiagnostics {
    pub t_s: f64,
    /// Points handed to the tracker (0 while bootstrapping).
    pub tracked_points: usize,
    /// Warped points that landed inside the view.
    pub in_view: usize,
    /// Mean robust cost per tracked point.
    pub mean_cost: f64,
    pub map_points: usize,
    /// True when the pose came from dead reckoning instead of registration.
    pub bridged: bool,
}

/// Aggregate event counters for a whole run.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunCounters {
    pub ticks: usize,
    pub mapping_updates: usize,
    pub static_points_accepted: usize,
    pub temporal_points_accepted: usize,
    pub bridged_ticks: usize,
    pub backend_runs: usize,
    /// Mapping jobs dropped because the worker was still busy.
    pub mapping_jobs_dropped: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Estimated camera pose per tick, timestamped in seconds.
    pub trajectory: Vec<(f64, Pose)>,
    pub diagnostics: Vec<TickDiagnostics>,
    pub counters: RunCounters,
    /// Final map size.
    pub map_points: usize,
    /// Final velocity and bias estimates.
    pub velocity: Vector3<f64>,
    pub bias: ImuBias,
}

pub fn write_diagnostics_csv(diag: &[TickDiagnostics], path: &Path) -> Result<(), IoError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t_s,tracked_points,in_view,mean_cost,map_points,bridged")?;
    for d in diag {
        writeln!(
            f,
            "{:.6},{},{},{:.6},{},{}",
            d.t_s,
            d.tracked_points,
            d.in_view,
            d.mean_cost,
            d.map_points,
            u8::from(d.bridged)
        )?;
    }
    Ok(())
}

/// Slice of `samples` with timestamps in `[t0, t1]` (inclusive both ends).
fn imu_slice(samples: &[ImuSample], t0: u64, t1: u64) -> &[ImuSample] {
    let lo = samples.partition_point(|s| s.t_us < t0);
    let hi = samples.partition_point(|s| s.t_us <= t1);
    &samples[lo..hi]
}

/// Selects well-constrained map points for the tracker: drops estimates whose
/// relative inverse-depth sigma exceeds `max_rel_sigma`, then subsamples
/// evenly to at most `max_points`. Stepping the ordered map spreads the kept
/// points across the image.
fn map_to_track_points(
    map: &LocalDepthMap,
    max_points: usize,
    max_rel_sigma: f64,
) -> Vec<TrackPoint> {
    if max_points == 0 {
        return Vec::new();
    }
    let confident: Vec<TrackPoint> = map
        .points
        .values()
        .filter(|p| p.rho > 0.0 && p.variance.sqrt() <= max_rel_sigma * p.rho)
        .map(|p| TrackPoint {
            u: f64::from(p.x),
            v: f64::from(p.y),
            inv_depth: p.rho,
        })
        .collect();
    if confident.is_empty() {
        return confident;
    }
    let stride = confident.len().div_ceil(max_points).max(1);
    confident.into_iter().step_by(stride).collect()
}

/// Inputs for one mapping update, self-contained so the work can run on a
/// worker thread.
struct MapJob {
    t_us: u64,
    pose: Pose,
    aa_counts: Grid<f64>,
    aa_map: crate::representations::AaMap,
    ts_left: Grid<f64>,
    ts_right: Grid<f64>,
    prev: Option<(Arc<Grid<f64>>, Pose)>,
    map: Option<Arc<LocalDepthMap>>,
    seed: u64,
}

struct MapResult {
    map: LocalDepthMap,
    static_accepted: usize,
    temporal_accepted: usize,
    /// AA frame and pose to use as the reference for the next update.
    aa_counts: Arc<Grid<f64>>,
    pose: Pose,
}

/// One mapping update: sample contours, split by gradient orientation, match
/// stereo and motion-parallax candidates, then fuse into the propagated map.
fn run_map_job(job: &MapJob, rig: &StereoRig, cfg: &PipelineConfig) -> MapResult {
    let cam = &rig.cam;
    let mut rng = ChaCha8Rng::seed_from_u64(job.seed);
    let points = sample_contour_points(&job.aa_map, cfg.n_sample_points, cfg.sample_margin, &mut rng);
    let (static_pts, temporal_pts) = split_by_gradient(&job.ts_left, &points, &cfg.split_cfg());

    let stereo_cfg = cfg.stereo_cfg();
    let mut static_accepted = Vec::new();
    for &(x, y) in &static_pts {
        if let Some(p) = static_stereo_match(&job.ts_left, &job.ts_right, x, y, rig, &stereo_cfg) {
            if p.rho >= cfg.rho_min && p.rho <= cfg.rho_max {
                static_accepted.push(p);
            }
        }
    }

    let temporal_cfg = cfg.temporal_cfg();
    let mut temporal_accepted = Vec::new();
    if let Some((prev_counts, prev_pose)) = &job.prev {
        let prev_from_curr = prev_pose.inverse().compose(&job.pose);
        if prev_from_curr.translation.norm() < cfg.temporal_min_baseline_m {
            return finish_map_job(job, cfg, cam, static_accepted, temporal_accepted);
        }
        for &(x, y) in &temporal_pts {
            if let Some(p) = temporal_stereo_match(
                &job.aa_counts,
                prev_counts,
                x,
                y,
                &prev_from_curr,
                cam,
                (cfg.rho_min, cfg.rho_max),
                &temporal_cfg,
            ) {
                temporal_accepted.push(p);
            }
        }
    }

    finish_map_job(job, cfg, cam, static_accepted, temporal_accepted)
}

/// Propagates the previous map to the job pose, fuses the fresh candidates,
/// and packages the result.
fn finish_map_job(
    job: &MapJob,
    cfg: &PipelineConfig,
    cam: &CameraIntrinsics,
    static_accepted: Vec<crate::mapping::DepthPoint>,
    temporal_accepted: Vec<crate::mapping::DepthPoint>,
) -> MapResult {
    let mut new_map = match &job.map {
        Some(old) => {
            let new_from_old = job.pose.inverse().compose(&old.reference);
            let mut propagated = propagate_map(old, &new_from_old, job.pose, job.t_us, cam);
            // Process noise: without it, repeatedly fused points claim
            // near-zero variance and stale depth can never be displaced.
            for p in propagated.points.values_mut() {
                p.variance *= cfg.map_process_noise;
            }
            propagated
        }
        None => LocalDepthMap::new(job.t_us, job.pose),
    };
    for p in static_accepted.iter().chain(temporal_accepted.iter()) {
        new_map.insert_fused(*p);
    }
    new_map.prune_to(cfg.max_map_points);

    MapResult {
        map: new_map,
        static_accepted: static_accepted.len(),
        temporal_accepted: temporal_accepted.len(),
        aa_counts: Arc::new(job.aa_counts.clone()),
        pose: job.pose,
    }
}

/// Observer invoked with every adopted local map, at the mapping cadence.
/// Lets callers persist depth snapshots without the run buffering them all.
pub type MapSink<'a> = &'a mut dyn FnMut(&LocalDepthMap);

/// Runs the full pipeline over an in-memory dataset.
pub fn run_pipeline(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineOutput, PipelineError> {
    run_pipeline_with(data, cfg, None)
}

/// [`run_pipeline`] with an optional observer for adopted maps.
pub fn run_pipeline_with(
    data: &Dataset,
    cfg: &PipelineConfig,
    sink: Option<MapSink<'_>>,
) -> Result<PipelineOutput, PipelineError> {
    cfg.validate()?;
    if cfg.threads > 1 {
        run_pipeline_threaded(data, cfg, sink)
    } else {
        run_pipeline_sequential(data, cfg, sink)
    }
}

/// Shared per-tick state advanced by both runner variants.
struct TickState {
    pose: Pose,
    velocity: Vector3<f64>,
    bias: ImuBias,
    /// Timestamp the pose/velocity state refers to.
    t_state_us: u64,
    map: Option<Arc<LocalDepthMap>>,
    /// Time of the last trusted registration (bridge bookkeeping).
    last_good_us: Option<u64>,
    window: Option<SlidingWindow>,
    last_node_us: u64,
    trajectory: Vec<(f64, Pose)>,
    diagnostics: Vec<TickDiagnostics>,
    counters: RunCounters,
}

impl TickState {
    fn new(data: &Dataset) -> Self {
        Self {
            pose: data.init_pose,
            velocity: data.init_velocity,
            bias: data.init_bias,
            t_state_us: 0,
            map: None,
            last_good_us: None,
            window: None,
            last_node_us: 0,
            trajectory: Vec::new(),
            diagnostics: Vec::new(),
            counters: RunCounters::default(),
        }
    }

    /// Dead-reckons pose and velocity from the state time to `t_us`.
    fn predict(&self, data: &Dataset, t_us: u64) -> (Pose, Vector3<f64>) {
        let span = imu_slice(&data.imu, self.t_state_us, t_us);
        match preintegrate(span, &self.bias) {
            Ok(pre) => predict_motion(&self.pose, &self.velocity, &pre, &data.gravity),
            Err(_) => (self.pose, self.velocity),
        }
    }

    /// Registers the map against the field; returns the refined pose when the
    /// result is trustworthy.
    fn try_track(
        &self,
        field: &RegistrationField,
        cam: &CameraIntrinsics,
        pose_pred: &Pose,
        relax: bool,
        cfg: &PipelineConfig,
    ) -> (Option<Pose>, usize, usize, f64) {
        let Some(map) = &self.map else {
            return (None, 0, 0, 0.0);
        };
        let points = map_to_track_points(map, cfg.track_max_points, cfg.track_max_rel_sigma);
        if points.len() < cfg.track_min_inliers {
            return (None, points.len(), 0, 0.0);
        }
        let theta = pose_pred.inverse().compose(&map.reference);
        let initial = MotionParams {
            c: quaternion_to_cayley(&theta.rotation).unwrap_or_else(Vector3::zeros),
            t: theta.translation,
        };
        match track(&points, field, cam, &initial, &cfg.track_cfg()) {
            Ok(res) => {
                let mut cost_gate = cfg.track_max_mean_cost;
                if relax {
                    cost_gate *= cfg.track_relaxed_cost_factor;
                }
                let mean_cost = res.cost / points.len() as f64;
                let ok = res.in_view >= cfg.track_min_inliers && mean_cost <= cost_gate;
                let pose = ok.then(|| pose_from_registration(&map.reference, &res.motion));
                (pose, points.len(), res.in_view, mean_cost)
            }
            Err(_) => (None, points.len(), 0, 0.0),
        }
    }

    /// Pushes a window node spanning from the previous node and re-solves
    /// velocity and biases.
    fn backend_update(&mut self, data: &Dataset, t_us: u64, cfg: &PipelineConfig) {
        if cfg.disable_backend {
            return;
        }
        let node = WindowNode {
            t_us,
            pose: self.pose,
            velocity: self.velocity,
            bias: self.bias,
        };
        match &mut self.window {
            None => {
                self.window = Some(SlidingWindow::new(cfg.window_size, node));
                self.last_node_us = t_us;
            }
            Some(window) => {
                let span = imu_slice(&data.imu, self.last_node_us, t_us);
                let Ok(pre) = preintegrate(span, &self.bias) else {
                    return;
                };
                window.push(node, pre);
                self.last_node_us = t_us;
                if window.len() >= 2 {
                    window.optimize(&data.gravity, &BackendConfig::default());
                    let latest = window.latest();
                    self.velocity = latest.velocity;
                    self.bias = latest.bias;
                    self.counters.backend_runs += 1;
                }
            }
        }
    }

    fn adopt_map(&mut self, res: MapResult) {
        self.counters.mapping_updates += 1;
        self.counters.static_points_accepted += res.static_accepted;
        self.counters.temporal_points_accepted += res.temporal_accepted;
        self.map = Some(Arc::new(res.map));
    }

    fn finish(self) -> PipelineOutput {
        PipelineOutput {
            trajectory: self.trajectory,
            diagnostics: self.diagnostics,
            counters: self.counters,
            map_points: self.map.as_ref().map_or(0, |m| m.len()),
            velocity: self.velocity,
            bias: self.bias,
        }
    }
}

/// Per-tick representation products shared by both runners.
struct TickFrames {
    field: RegistrationField,
}

fn build_tick_frames(last_left: &LastEventTimes, t_us: u64, cfg: &PipelineConfig) -> TickFrames {
    let ts = build_time_surface(last_left, t_us, cfg.decay_us);
    let osts = build_osts(&ts, cfg.osts_sigma, cfg.osts_radius);
    let neg = crate::representations::negative_surface(&osts);
    TickFrames {
        field: RegistrationField::new(neg),
    }
}

fn build_map_job(
    data: &Dataset,
    state: &TickState,
    last_left: &LastEventTimes,
    last_right: &LastEventTimes,
    pose: Pose,
    t_us: u64,
    prev: Option<(Arc<Grid<f64>>, Pose)>,
    cfg: &PipelineConfig,
    tick: u64,
) -> MapJob {
    let t0 = t_us.saturating_sub(cfg.aa_window_us);
    let w = data.left.width;
    let h = data.left.height;
    let aa_map = build_aa(data.left.slice_range(t0, t_us), w, h, &cfg.region_cfg());
    let aa_counts = aa_map.counts.map(f64::from);
    let ts_left = build_time_surface(last_left, t_us, cfg.decay_us);
    let ts_right = build_time_surface(last_right, t_us, cfg.decay_us);
    MapJob {
        t_us,
        pose,
        aa_counts,
        aa_map,
        ts_left,
        ts_right,
        prev,
        map: state.map.clone(),
        seed: cfg.seed.wrapping_add(tick),
    }
}

/// Advances tracking state through one tick; shared by both runners.
/// Returns the pose recorded for this tick.
#[allow(clippy::too_many_arguments)]
fn advance_tick(
    state: &mut TickState,
    data: &Dataset,
    frames: &TickFrames,
    t_us: u64,
    t_s: f64,
    cfg: &PipelineConfig,
) -> Result<Pose, PipelineError> {
    let (pose_pred, vel_pred) = state.predict(data, t_us);
    // While coasting (the previous tick produced no trusted registration) a
    // converged solve is re-accepted at a relaxed cost gate: its residual is
    // bounded, while inertial dead reckoning drifts without bound.
    let relax = state.last_good_us != Some(state.t_state_us);
    let (tracked, n_points, in_view, mean_cost) =
        state.try_track(&frames.field, &data.rig.cam, &pose_pred, relax, cfg);

    let bridged = tracked.is_none();
    let pose = tracked.unwrap_or(pose_pred);
    if !bridged {
        state.last_good_us = Some(t_us);
    } else {
        state.counters.bridged_ticks += 1;
        if state.map.is_some() {
            let since = state.last_good_us.unwrap_or(0);
            if (t_us - since) as f64 * 1e-6 > cfg.max_bridge_s {
                return Err(PipelineError::TrackingLost { t_us });
            }
        } else if t_s > cfg.bootstrap_deadline_s {
            return Err(PipelineError::Bootstrap { t_us });
        }
    }

    state.pose = pose;
    state.velocity = vel_pred;
    state.t_state_us = t_us;
    state.trajectory.push((t_s, pose));
    state.diagnostics.push(TickDiagnostics {
        t_s,
        tracked_points: n_points,
        in_view,
        mean_cost,
        map_points: state.map.as_ref().map_or(0, |m| m.len()),
        bridged,
    });
    state.counters.ticks += 1;
    Ok(pose)
}

fn end_time_us(data: &Dataset) -> u64 {
    let t_left = data.left.events.last().map_or(0, |e| e.t_us);
    let t_right = data.right.events.last().map_or(0, |e| e.t_us);
    let t_imu = data.imu.last().map_or(0, |s| s.t_us);
    t_left.max(t_right).max(t_imu)
}

fn run_pipeline_sequential(
    data: &Dataset,
    cfg: &PipelineConfig,
    mut sink: Option<MapSink<'_>>,
) -> Result<PipelineOutput, PipelineError> {
    let w = data.left.width;
    let h = data.left.height;
    let tick_us = (1e6 / cfg.tick_hz).round() as u64;
    let t_end = end_time_us(data);

    let mut last_left = LastEventTimes::new(w, h);
    let mut last_right = LastEventTimes::new(w, h);
    let mut state = TickState::new(data);
    // Bootstrap anchor: when the first map is built the current pose is the
    // dead-reckoned one, so the whole trajectory is expressed in the dataset's
    // initial frame.
    let mut prev_aa: Option<(Arc<Grid<f64>>, Pose)> = None;

    let mut t_prev = 0u64;
    let mut tick: u64 = 0;
    loop {
        tick += 1;
        let t_us = tick * tick_us;
        if t_us > t_end {
            break;
        }
        let t_s = t_us as f64 * 1e-6;
        last_left.ingest(data.left.slice_range(t_prev, t_us));
        last_right.ingest(data.right.slice_range(t_prev, t_us));
        t_prev = t_us;

        let frames = build_tick_frames(&last_left, t_us, cfg);
        let pose = advance_tick(&mut state, data, &frames, t_us, t_s, cfg)?;

        if tick % u64::from(cfg.map_interval_ticks) == 0 {
            let job = build_map_job(
                data,
                &state,
                &last_left,
                &last_right,
                pose,
                t_us,
                prev_aa.clone(),
                cfg,
                tick,
            );
            let res = run_map_job(&job, &data.rig, cfg);
            prev_aa = Some((res.aa_counts.clone(), res.pose));
            let enough = res.map.len() >= cfg.bootstrap_min_points;
            if state.map.is_some() || enough {
                if let Some(f) = sink.as_deref_mut() {
                    f(&res.map);
                }
                state.adopt_map(res);
            }
        }

        if tick % u64::from(cfg.backend_interval_ticks) == 0 {
            state.backend_update(data, t_us, cfg);
        }
    }

    Ok(state.finish())
}

/// Same tick loop, but mapping updates run on a worker thread. The tracker
/// never waits for the mapper: jobs are dropped when the worker is busy and
/// finished maps are adopted at the next tick boundary.
fn run_pipeline_threaded(
    data: &Dataset,
    cfg: &PipelineConfig,
    mut sink: Option<MapSink<'_>>,
) -> Result<PipelineOutput, PipelineError> {
    let w = data.left.width;
    let h = data.left.height;
    let tick_us = (1e6 / cfg.tick_hz).round() as u64;
    let t_end = end_time_us(data);

    let mut last_left = LastEventTimes::new(w, h);
    let mut last_right = LastEventTimes::new(w, h);

    std::thread::scope(|scope| {
        let (job_tx, job_rx) = mpsc::sync_channel::<MapJob>(1);
        let (res_tx, res_rx) = mpsc::channel::<MapResult>();
        let rig = data.rig;
        let worker_cfg = cfg.clone();
        scope.spawn(move || {
            while let Ok(job) = job_rx.recv() {
                let res = run_map_job(&job, &rig, &worker_cfg);
                if res_tx.send(res).is_err() {
                    break;
                }
            }
        });

        let mut state = TickState::new(data);
        let mut prev_aa: Option<(Arc<Grid<f64>>, Pose)> = None;

        let mut t_prev = 0u64;
        let mut tick: u64 = 0;
        let result = loop {
            tick += 1;
            let t_us = tick * tick_us;
            if t_us > t_end {
                break Ok(());
            }
            let t_s = t_us as f64 * 1e-6;
            last_left.ingest(data.left.slice_range(t_prev, t_us));
            last_right.ingest(data.right.slice_range(t_prev, t_us));
            t_prev = t_us;

            // Adopt any maps the worker finished since the last tick.
            while let Ok(res) = res_rx.try_recv() {
                prev_aa = Some((res.aa_counts.clone(), res.pose));
                let enough = res.map.len() >= cfg.bootstrap_min_points;
                if state.map.is_some() || enough {
                    if let Some(f) = sink.as_deref_mut() {
                        f(&res.map);
                    }
                    state.adopt_map(res);
                }
            }

            let frames = build_tick_frames(&last_left, t_us, cfg);
            let pose = match advance_tick(&mut state, data, &frames, t_us, t_s, cfg) {
                Ok(p) => p,
                Err(e) => break Err(e),
            };

            if tick % u64::from(cfg.map_interval_ticks) == 0 {
                let job = build_map_job(
                    data,
                    &state,
                    &last_left,
                    &last_right,
                    pose,
                    t_us,
                    prev_aa.clone(),
                    cfg,
                    tick,
                );
                match job_tx.try_send(job) {
                    Ok(()) => {}
                    Err(mpsc::TrySendError::Full(_)) => {
                        state.counters.mapping_jobs_dropped += 1;
                    }
                    Err(mpsc::TrySendError::Disconnected(_)) => {
                        break Err(PipelineError::BadConfig(
                            "mapping worker terminated unexpectedly".into(),
                        ));
                    }
                }
            }

            if tick % u64::from(cfg.backend_interval_ticks) == 0 {
                state.backend_update(data, t_us, cfg);
            }
        };

        drop(job_tx);
        // Drain whatever the worker still produced so the final map count is
        // meaningful.
        while let Ok(res) = res_rx.recv() {
            let enough = res.map.len() >= cfg.bootstrap_min_points;
            if state.map.is_some() || enough {
                if let Some(f) = sink.as_deref_mut() {
                    f(&res.map);
                }
                state.adopt_map(res);
            }
        }

        result.map(|()| state.finish())
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::dataset::load_dataset;
    use crate::metrics::{absolute_trajectory_error, associate};
    use crate::sim::{SceneKind, SimConfig};
    use crate::sim::write_dataset;

    fn small_sim_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.rig.cam = CameraIntrinsics {
            width: 160,
            height: 120,
            fx: 144.0,
            fy: 144.0,
            cx: 79.5,
            cy: 59.5,
        };
        cfg.rig.baseline_m = 0.12;
        cfg.scene_kind = SceneKind::DeskCorner;
        cfg.wall_distance_m = 1.6;
        cfg.duration_s = 1.2;
        cfg.seed = 11;
        cfg
    }

    fn small_pipeline_config() -> PipelineConfig {
        PipelineConfig {
            n_sample_points: 160,
            track_max_points: 250,
            max_map_points: 1500,
            bootstrap_min_points: 40,
            track_min_inliers: 20,
            ..PipelineConfig::default()
        }
    }

    fn dataset_from_sim(cfg: &SimConfig) -> Dataset {
        let dir = tempfile::tempdir().unwrap();
        let out = cfg.run();
        write_dataset(cfg, &out, dir.path()).unwrap();
        load_dataset(dir.path()).unwrap()
    }

    #[test]
    fn config_defaults_and_overrides() {
        let cfg = PipelineConfig::from_config(&ConfigMap::parse("").unwrap()).unwrap();
        assert_eq!(cfg.tick_hz, 100.0);
        assert_eq!(cfg.window_size, 5);
        assert!(!cfg.disable_backend);

        let text = "tick_hz = 50\nthreads = 2\ndisable_backend = true\nrho_max = 3.0\n";
        let cfg = PipelineConfig::from_config(&ConfigMap::parse(text).unwrap()).unwrap();
        assert_eq!(cfg.tick_hz, 50.0);
        assert_eq!(cfg.threads, 2);
        assert!(cfg.disable_backend);
        assert_eq!(cfg.rho_max, 3.0);
    }

    #[test]
    fn config_rejects_unknown_key() {
        let err = PipelineConfig::from_config(&ConfigMap::parse("tick_rate = 10\n").unwrap());
        assert!(err.is_err());
    }

    #[test]
    fn config_validation_catches_bad_ranges() {
        let mut cfg = PipelineConfig::default();
        cfg.rho_min = 0.5;
        cfg.rho_max = 0.1;
        assert!(matches!(
            cfg.validate(),
            Err(PipelineError::BadConfig(_))
        ));

        let mut cfg = PipelineConfig::default();
        cfg.threads = 0;
        assert!(cfg.validate().is_err());

        let mut cfg = PipelineConfig::default();
        cfg.window_size = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_run_on_simulated_desk_scene_stays_close_to_truth() {
        let sim = small_sim_config();
        let data = dataset_from_sim(&sim);
        let cfg = small_pipeline_config();
        let out = run_pipeline(&data, &cfg).expect("pipeline completes");

        // Roughly one pose per tick over the whole sequence.
        let expected_ticks = (sim.duration_s * cfg.tick_hz) as usize;
        assert!(out.trajectory.len() >= expected_ticks - 5);
        assert!(out.counters.mapping_updates >= 10);
        assert!(out.map_points >= cfg.bootstrap_min_points);

        // Most ticks after bootstrap should be tracked, not dead-reckoned.
        let tracked = out.diagnostics.iter().filter(|d| !d.bridged).count();
        assert!(
            tracked * 2 > out.diagnostics.len(),
            "tracked {} of {} ticks",
            tracked,
            out.diagnostics.len()
        );

        let gt = data.groundtruth.as_ref().expect("sim writes ground truth");
        let pairs = associate(&out.trajectory, gt, 0.01);
        assert!(pairs.len() > 50);
        let ate = absolute_trajectory_error(&pairs).expect("enough pairs");
        // Desk-scale scene, centimeter-level drift budget.
        assert!(
            ate.rmse_m < 0.05,
            "ATE {:.4} m too large for a {:.1} s desk sequence",
            ate.rmse_m,
            sim.duration_s
        );
    }

    #[test]
    fn threaded_run_completes_and_tracks() {
        let sim = small_sim_config();
        let data = dataset_from_sim(&sim);
        let cfg = PipelineConfig {
            threads: 2,
            ..small_pipeline_config()
        };
        let out = run_pipeline(&data, &cfg).expect("threaded pipeline completes");
        assert!(out.counters.mapping_updates >= 5);
        let tracked = out.diagnostics.iter().filter(|d| !d.bridged).count();
        assert!(tracked * 2 > out.diagnostics.len());

        let gt = data.groundtruth.as_ref().unwrap();
        let pairs = associate(&out.trajectory, gt, 0.01);
        let ate = absolute_trajectory_error(&pairs).unwrap();
        assert!(ate.rmse_m < 0.08, "threaded ATE {:.4} m", ate.rmse_m);
    }

    #[test]
    fn bootstrap_fails_cleanly_without_events() {
        let sim = small_sim_config();
        let out = sim.run();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&sim, &out, dir.path()).unwrap();
        let mut data = load_dataset(dir.path()).unwrap();
        // Strip nearly all events: representations stay empty, stereo cannot
        // bootstrap, and the deadline must fire.
        data.left.events.truncate(10);
        data.right.events.truncate(10);
        // Keep IMU so dead reckoning still advances time; the deadline must
        // fit inside the shortened sequence.
        let cfg = PipelineConfig {
            bootstrap_deadline_s: 0.6,
            ..small_pipeline_config()
        };
        match run_pipeline(&data, &cfg) {
            Err(PipelineError::Bootstrap { .. }) => {}
            other => panic!("expected bootstrap failure, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_csv_round_trips_shape() {
        let diag = vec![
            TickDiagnostics {
                t_s: 0.01,
                tracked_points: 100,
                in_view: 90,
                mean_cost: 0.02,
                map_points: 500,
                bridged: false,
            },
            TickDiagnostics {
                t_s: 0.02,
                tracked_points: 0,
                in_view: 0,
                mean_cost: 0.0,
                map_points: 0,
                bridged: true,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        write_diagnostics_csv(&diag, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("t_s,"));
        assert!(lines[1].starts_with("0.010000,100,90,"));
        assert!(lines[2].ends_with(",1"));
    }
}
