//! `evio` — event-based stereo visual-inertial odometry from the command line.
//!
//! Subcommands: `simulate` (synthesize a dataset), `run` (estimate a
//! trajectory), `eval` (score a trajectory against ground truth) and `bench`
//! (time the core kernels).
//!
//! Exit codes: 0 on success, 2 when inputs violate their contract (bad
//! config, unreadable or incomplete dataset, failed association), 3 when the
//! estimator hard-fails (no bootstrap, or dead reckoning past the bridge
//! limit).

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use evio_core::imu::{preintegrate, ImuBias, ImuSample};
use evio_core::io::config::ConfigMap;
use evio_core::io::dataset::{load_dataset, read_trajectory, write_trajectory};
use evio_core::io::maps::write_pfm;
use evio_core::mapping::zncc::{zncc_scan_fast, zncc_scan_naive, View2};
use evio_core::metrics::{
    absolute_rotation_error, absolute_trajectory_error, associate, relative_pose_error,
};
use evio_core::pipeline::{
    run_pipeline_with, write_diagnostics_csv, PipelineConfig, PipelineError,
};
use evio_core::representations::{build_aa, RegionGridConfig};
use evio_core::sim::{write_dataset, SimConfig};

const EXIT_BAD_INPUT: i32 = 2;
const EXIT_TRACKING_FAILED: i32 = 3;

/// `println!` that exits quietly when the reader of a pipe goes away
/// (e.g. `evio ... | head`) instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let mut out = std::io::stdout().lock();
        if let Err(e) = writeln!(out, $($arg)*) {
            if e.kind() == std::io::ErrorKind::BrokenPipe {
                std::process::exit(0);
            }
            eprintln!("error: writing stdout: {e}");
            std::process::exit(EXIT_BAD_INPUT);
        }
    }};
}

#[derive(Parser)]
#[command(name = "evio", version, about = "Event-based stereo visual-inertial odometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a stereo event + IMU dataset with exact ground truth.
    Simulate {
        /// Output dataset directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Scene/sensor settings, `key = value` per line.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Estimate a trajectory from a dataset directory.
    Run {
        /// Dataset directory containing `dataset.cfg`.
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for trajectory and diagnostics.
        #[arg(long)]
        out: PathBuf,
        /// Pipeline settings, `key = value` per line.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
        /// Force the deterministic single-threaded runner.
        #[arg(long, conflicts_with = "threads")]
        single_thread: bool,
        /// Worker threads (1 = sequential).
        #[arg(long)]
        threads: Option<usize>,
        /// Keep velocity/bias fixed at their initial values.
        #[arg(long)]
        disable_backend: bool,
        /// Also write one inverse-depth PFM per mapping update.
        #[arg(long)]
        depth_maps: bool,
    },
    /// Score an estimated trajectory against ground truth.
    Eval {
        /// Estimated trajectory (`t x y z qx qy qz qw` per line).
        #[arg(long)]
        est: PathBuf,
        /// Ground-truth trajectory, same format.
        #[arg(long)]
        gt: PathBuf,
        /// Directory for the machine-readable `metrics.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Horizon for relative drift rates, seconds.
        #[arg(long, default_value_t = 1.0)]
        rpe_delta: f64,
        /// Association tolerance, seconds.
        #[arg(long, default_value_t = 0.02)]
        max_dt: f64,
    },
    /// Time a core kernel and print median wall time.
    Bench {
        /// Kernel to time.
        #[arg(long, value_enum)]
        kind: BenchKind,
        /// Repetitions (median reported).
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Overrides the data-generation seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchKind {
    /// Patch-vs-strip correlation scan, recursive vs per-window statistics.
    Zncc,
    /// Adaptive accumulation of an event burst into a frame.
    Aa,
    /// Inertial pre-integration over a 1000-sample window.
    Preint,
}

fn main() {
    let cli = Cli::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code_for(&e)
        }
    };
    std::process::exit(code);
}

fn exit_code_for(e: &anyhow::Error) -> i32 {
    match e.downcast_ref::<PipelineError>() {
        Some(PipelineError::Bootstrap { .. } | PipelineError::TrackingLost { .. }) => {
            EXIT_TRACKING_FAILED
        }
        _ => EXIT_BAD_INPUT,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { out, config, seed } => cmd_simulate(&out, config.as_deref(), seed),
        Command::Run {
            dataset,
            out,
            config,
            seed,
            single_thread,
            threads,
            disable_backend,
            depth_maps,
        } => cmd_run(
            &dataset,
            &out,
            config.as_deref(),
            seed,
            single_thread,
            threads,
            disable_backend,
            depth_maps,
        ),
        Command::Eval {
            est,
            gt,
            out,
            rpe_delta,
            max_dt,
        } => cmd_eval(&est, &gt, out.as_deref(), rpe_delta, max_dt),
        Command::Bench { kind, reps, seed } => cmd_bench(kind, reps, seed.unwrap_or(1)),
    }
}

fn load_config_map(path: Option<&Path>) -> Result<ConfigMap> {
    match path {
        Some(p) => {
            ConfigMap::load(p).with_context(|| format!("reading config {}", p.display()))
        }
        None => Ok(ConfigMap::default()),
    }
}

fn cmd_simulate(out: &Path, config: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let map = load_config_map(config)?;
    let mut cfg = SimConfig::from_config(&map).context("invalid simulation config")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }

    let t0 = Instant::now();
    let sim = cfg.run();
    write_dataset(&cfg, &sim, out)
        .with_context(|| format!("writing dataset to {}", out.display()))?;

    outln!("dataset written to {}", out.display());
    outln!(
        "  {:.2} s, {}x{}, seed {}",
        cfg.duration_s, cfg.rig.cam.width, cfg.rig.cam.height, cfg.seed
    );
    outln!(
        "  events: {} left, {} right (render rate {:.0} Hz)",
        sim.left.events.len(),
        sim.right.events.len(),
        sim.render_hz
    );
    outln!(
        "  imu samples: {}, ground-truth poses: {}",
        sim.imu.len(),
        sim.groundtruth.len()
    );
    outln!("  simulated in {:.2} s", t0.elapsed().as_secs_f64());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    dataset: &Path,
    out: &Path,
    config: Option<&Path>,
    seed: Option<u64>,
    single_thread: bool,
    threads: Option<usize>,
    disable_backend: bool,
    depth_maps: bool,
) -> Result<()> {
    let map = load_config_map(config)?;
    let mut cfg = PipelineConfig::from_config(&map).context("invalid pipeline config")?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if single_thread {
        cfg.threads = 1;
    }
    if let Some(n) = threads {
        cfg.threads = n;
    }
    if disable_backend {
        cfg.disable_backend = true;
    }

    let data = load_dataset(dataset)
        .with_context(|| format!("loading dataset {}", dataset.display()))?;
    if data.imu.len() < 2 {
        bail!(
            "dataset {} carries {} IMU sample(s); this estimator is visual-inertial and needs an IMU log",
            dataset.display(),
            data.imu.len()
        );
    }

    std::fs::create_dir_all(out)
        .with_context(|| format!("creating output directory {}", out.display()))?;
    let depth_dir = out.join("depth");
    if depth_maps {
        std::fs::create_dir_all(&depth_dir)?;
    }

    let (w, h) = (data.left.width, data.left.height);
    let mut depth_write_err: Option<std::io::Error> = None;
    let mut depth_written = 0usize;
    let mut sink = |m: &evio_core::LocalDepthMap| {
        if depth_write_err.is_some() {
            return;
        }
        let grid = m.to_inverse_depth_grid(w, h);
        let path = depth_dir.join(format!("inverse_depth_{:010}us.pfm", m.t_ref_us));
        match write_pfm(&grid, &path) {
            Ok(()) => depth_written += 1,
            Err(e) => depth_write_err = Some(std::io::Error::other(e.to_string())),
        }
    };

    let t0 = Instant::now();
    let result = run_pipeline_with(
        &data,
        &cfg,
        depth_maps.then_some(&mut sink as &mut dyn FnMut(&evio_core::LocalDepthMap)),
    );
    let wall_s = t0.elapsed().as_secs_f64();
    let output = result.map_err(anyhow::Error::new)?;
    if let Some(e) = depth_write_err {
        return Err(anyhow!(e)).context("writing depth snapshots");
    }

    write_trajectory(&output.trajectory, &out.join("trajectory.txt"))
        .context("writing trajectory")?;
    write_diagnostics_csv(&output.diagnostics, &out.join("diagnostics.csv"))
        .context("writing diagnostics")?;

    let c = &output.counters;
    outln!("run finished in {wall_s:.2} s ({} ticks)", c.ticks);
    outln!(
        "  mapping updates: {} ({} static pts, {} temporal pts, {} jobs dropped)",
        c.mapping_updates,
        c.static_points_accepted,
        c.temporal_points_accepted,
        c.mapping_jobs_dropped
    );
    outln!(
        "  bridged ticks: {} / {}, backend runs: {}, final map: {} points",
        c.bridged_ticks, c.ticks, c.backend_runs, output.map_points
    );
    if depth_maps {
        outln!("  depth snapshots: {depth_written} PFM files in {}", depth_dir.display());
    }
    outln!("  trajectory: {}", out.join("trajectory.txt").display());

    if let Some(gt) = &data.groundtruth {
        let pairs = associate(&output.trajectory, gt, 0.02);
        if let Some(ate) = absolute_trajectory_error(&pairs) {
            outln!(
                "  vs ground truth: ATE rmse {:.4} m over {} poses",
                ate.rmse_m, ate.samples
            );
        }
    }
    Ok(())
}

fn cmd_eval(
    est_path: &Path,
    gt_path: &Path,
    out: Option<&Path>,
    rpe_delta: f64,
    max_dt: f64,
) -> Result<()> {
    let est = read_trajectory(est_path)
        .with_context(|| format!("reading estimate {}", est_path.display()))?;
    let gt = read_trajectory(gt_path)
        .with_context(|| format!("reading ground truth {}", gt_path.display()))?;

    let pairs = associate(&est, &gt, max_dt);
    if pairs.len() < 3 {
        bail!(
            "only {} associated pose pairs within {max_dt} s; need at least 3 (disjoint time ranges?)",
            pairs.len()
        );
    }
    let ate = absolute_trajectory_error(&pairs)
        .ok_or_else(|| anyhow!("degenerate alignment: associated positions are collinear"))?;
    let are_deg = absolute_rotation_error(&pairs)
        .ok_or_else(|| anyhow!("degenerate rotation alignment"))?
        .to_degrees();

    outln!("association: {} pairs (max_dt {max_dt} s)", pairs.len());
    outln!("absolute error after rigid alignment:");
    outln!(
        "  translation rmse {:.4} m (mean {:.4}, median {:.4}, max {:.4})",
        ate.rmse_m, ate.mean_m, ate.median_m, ate.max_m
    );
    outln!("  rotation rmse {are_deg:.4} deg");

    let rpe = relative_pose_error(&est, &gt, rpe_delta, max_dt);
    match &rpe {
        Some(r) => {
            outln!("relative error over {rpe_delta} s windows ({} samples):", r.samples);
            outln!(
                "  translation {:.4} m/s, rotation {:.4} deg/s",
                r.rmse_translation_m / rpe_delta,
                r.rmse_rotation_rad.to_degrees() / rpe_delta
            );
        }
        None => println!("relative error: no window spans {rpe_delta} s; skipped"),
    }

    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("metrics.csv");
        let mut text = String::from("metric,value\n");
        text.push_str(&format!("associated_pairs,{}\n", pairs.len()));
        text.push_str(&format!("ate_translation_rmse_m,{:.9}\n", ate.rmse_m));
        text.push_str(&format!("ate_translation_mean_m,{:.9}\n", ate.mean_m));
        text.push_str(&format!("ate_translation_median_m,{:.9}\n", ate.median_m));
        text.push_str(&format!("ate_translation_max_m,{:.9}\n", ate.max_m));
        text.push_str(&format!("ate_rotation_rmse_deg,{are_deg:.9}\n"));
        if let Some(r) = &rpe {
            text.push_str(&format!("rpe_delta_s,{rpe_delta}\n"));
            text.push_str(&format!("rpe_samples,{}\n", r.samples));
            text.push_str(&format!(
                "rpe_translation_rmse_m_per_s,{:.9}\n",
                r.rmse_translation_m / rpe_delta
            ));
            text.push_str(&format!(
                "rpe_rotation_rmse_deg_per_s,{:.9}\n",
                r.rmse_rotation_rad.to_degrees() / rpe_delta
            ));
        }
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        outln!("metrics written to {}", path.display());
    }
    Ok(())
}

/// Runs `f` `reps` times and returns the median wall time in microseconds.
fn median_time_us(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64() * 1e6
        })
        .collect();
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    times[times.len() / 2]
}

fn cmd_bench(kind: BenchKind, reps: usize, seed: u64) -> Result<()> {
    // Small deterministic generator; fine for filling benchmark inputs.
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).max(1);
    let mut next_f64 = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };

    match kind {
        BenchKind::Zncc => {
            const BLOCK: usize = 15;
            const STRIP: usize = 100 + BLOCK - 1;
            let patch_data: Vec<f64> = (0..BLOCK * BLOCK).map(|_| next_f64()).collect();
            let strip_data: Vec<f64> = (0..BLOCK * STRIP).map(|_| next_f64()).collect();
            let patch = View2::new(&patch_data, BLOCK, BLOCK, BLOCK);
            let strip = View2::new(&strip_data, STRIP, BLOCK, STRIP);

            let naive_us = median_time_us(reps, || {
                std::hint::black_box(zncc_scan_naive(
                    std::hint::black_box(&patch),
                    std::hint::black_box(&strip),
                ));
            });
            let fast_us = median_time_us(reps, || {
                std::hint::black_box(zncc_scan_fast(
                    std::hint::black_box(&patch),
                    std::hint::black_box(&strip),
                ));
            });
            outln!("correlation scan, {BLOCK}x{BLOCK} patch over {} positions, median of {reps}:", STRIP - BLOCK + 1);
            outln!("  per-window statistics: {naive_us:.2} us");
            outln!("  recursive statistics:  {fast_us:.2} us");
            outln!("  speedup: {:.2}x", naive_us / fast_us.max(1e-9));
        }
        BenchKind::Aa => {
            const N_EVENTS: usize = 70_000;
            let (w, h) = (320u32, 240u32);
            let events: Vec<evio_core::Event> = (0..N_EVENTS)
                .map(|k| evio_core::Event {
                    t_us: k as u64,
                    x: (next_f64() * f64::from(w)) as u16 % w as u16,
                    y: (next_f64() * f64::from(h)) as u16 % h as u16,
                    polarity: if next_f64() < 0.5 { 1 } else { -1 },
                })
                .collect();
            let cfg = RegionGridConfig::default();
            let us = median_time_us(reps, || {
                std::hint::black_box(build_aa(std::hint::black_box(&events), w, h, &cfg));
            });
            outln!("adaptive accumulation of {N_EVENTS} events at {w}x{h}, median of {reps}:");
            outln!("  build: {:.1} us ({:.1} ns/event)", us, us * 1e3 / N_EVENTS as f64);
        }
        BenchKind::Preint => {
            const N_SAMPLES: usize = 1000;
            let samples: Vec<ImuSample> = (0..N_SAMPLES)
                .map(|k| ImuSample {
                    t_us: k as u64 * 1000,
                    gyro: nalgebra::Vector3::new(next_f64(), next_f64(), next_f64()),
                    accel: nalgebra::Vector3::new(next_f64(), next_f64(), 9.0 + next_f64()),
                })
                .collect();
            let bias = ImuBias::default();
            let us = median_time_us(reps, || {
                std::hint::black_box(preintegrate(std::hint::black_box(&samples), &bias)).ok();
            });
            outln!("pre-integration of {N_SAMPLES} samples, median of {reps}:");
            outln!("  integrate: {us:.1} us ({:.1} ns/sample)", us * 1e3 / N_SAMPLES as f64);
        }
    }
    Ok(())
}
