//! End-to-end tests of the `evio` binary: simulate → run → eval round trips,
//! determinism, exit-code contract and bench smoke tests.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn evio() -> Command {
    Command::new(env!("CARGO_BIN_EXE_evio"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("spawn evio");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn write_cfg(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

/// Small desk scene the pipeline is known to track well.
const SIM_CFG: &str = "width = 160\nheight = 120\nfx = 144\nbaseline_m = 0.12\n\
                       scene = desk\nwall_distance_m = 1.6\nduration_s = 1.2\nseed = 11\n";
const PIPE_CFG: &str = "n_sample_points = 160\ntrack_max_points = 250\nmax_map_points = 1500\n\
                        bootstrap_min_points = 40\ntrack_min_inliers = 20\n";

fn simulate_desk(dir: &Path) -> PathBuf {
    let cfg = dir.join("sim.cfg");
    write_cfg(&cfg, SIM_CFG);
    let ds = dir.join("dataset");
    run_ok(evio().args(["simulate", "--out"]).arg(&ds).arg("--config").arg(&cfg));
    ds
}

fn pipe_cfg(dir: &Path) -> PathBuf {
    let cfg = dir.join("pipe.cfg");
    write_cfg(&cfg, PIPE_CFG);
    cfg
}

fn metric(csv: &Path, key: &str) -> f64 {
    let text = std::fs::read_to_string(csv).unwrap();
    for line in text.lines() {
        if let Some(v) = line.strip_prefix(&format!("{key},")) {
            return v.parse().unwrap();
        }
    }
    panic!("metric {key} not found in {}", csv.display());
}

#[test]
fn simulate_run_eval_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = simulate_desk(tmp.path());
    for name in ["dataset.cfg", "events_left.evt1", "events_right.evt1", "imu.csv", "groundtruth.txt"] {
        assert!(ds.join(name).exists(), "missing {name}");
    }

    let cfg = pipe_cfg(tmp.path());
    let out_dir = tmp.path().join("run");
    run_ok(
        evio()
            .args(["run", "--dataset"])
            .arg(&ds)
            .arg("--out")
            .arg(&out_dir)
            .arg("--config")
            .arg(&cfg)
            .args(["--single-thread", "--depth-maps"]),
    );

    let traj = out_dir.join("trajectory.txt");
    let lines = std::fs::read_to_string(&traj).unwrap().lines().count();
    assert!(lines > 100, "trajectory has only {lines} lines");
    assert!(out_dir.join("diagnostics.csv").exists());

    let depth_files: Vec<_> = std::fs::read_dir(out_dir.join("depth"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "pfm"))
        .collect();
    assert!(depth_files.len() >= 20, "only {} depth snapshots", depth_files.len());

    let eval_dir = tmp.path().join("eval");
    run_ok(
        evio()
            .args(["eval", "--est"])
            .arg(&traj)
            .arg("--gt")
            .arg(ds.join("groundtruth.txt"))
            .arg("--out")
            .arg(&eval_dir),
    );
    let csv = eval_dir.join("metrics.csv");
    let ate = metric(&csv, "ate_translation_rmse_m");
    assert!(ate < 0.05, "ATE {ate} m too large");

    // Scoring a trajectory against itself is exactly zero.
    let self_dir = tmp.path().join("self");
    run_ok(
        evio()
            .args(["eval", "--est"])
            .arg(ds.join("groundtruth.txt"))
            .arg("--gt")
            .arg(ds.join("groundtruth.txt"))
            .arg("--out")
            .arg(&self_dir),
    );
    assert!(metric(&self_dir.join("metrics.csv"), "ate_translation_rmse_m") < 1e-12);
    assert!(metric(&self_dir.join("metrics.csv"), "ate_rotation_rmse_deg") < 1e-9);
}

#[test]
fn single_thread_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = simulate_desk(tmp.path());
    let cfg = pipe_cfg(tmp.path());

    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = tmp.path().join(name);
        run_ok(
            evio()
                .args(["run", "--dataset"])
                .arg(&ds)
                .arg("--out")
                .arg(&out_dir)
                .arg("--config")
                .arg(&cfg)
                .arg("--single-thread"),
        );
        runs.push(std::fs::read(out_dir.join("trajectory.txt")).unwrap());
    }
    assert_eq!(runs[0], runs[1], "repeated single-thread runs differ");
}

#[test]
fn threaded_run_stays_close_to_sequential() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = simulate_desk(tmp.path());
    let cfg = pipe_cfg(tmp.path());

    let mut ates = Vec::new();
    for (name, extra) in [("seq", vec!["--single-thread"]), ("thr", vec!["--threads", "2"])] {
        let out_dir = tmp.path().join(name);
        run_ok(
            evio()
                .args(["run", "--dataset"])
                .arg(&ds)
                .arg("--out")
                .arg(&out_dir)
                .arg("--config")
                .arg(&cfg)
                .args(&extra),
        );
        let eval_dir = tmp.path().join(format!("{name}_eval"));
        run_ok(
            evio()
                .args(["eval", "--est"])
                .arg(out_dir.join("trajectory.txt"))
                .arg("--gt")
                .arg(ds.join("groundtruth.txt"))
                .arg("--out")
                .arg(&eval_dir),
        );
        ates.push(metric(&eval_dir.join("metrics.csv"), "ate_translation_rmse_m"));
    }
    // Scheduling may shift snapshot timing; accuracy must stay in the same
    // class. The trajectory covers ~0.9 m, so this bounds the gap to ~5%.
    assert!(
        (ates[0] - ates[1]).abs() < 0.045,
        "sequential ATE {} vs threaded ATE {}",
        ates[0],
        ates[1]
    );
}

#[test]
fn contract_violations_exit_2() {
    let tmp = tempfile::tempdir().unwrap();

    // Unknown simulation key.
    let bad = tmp.path().join("bad.cfg");
    write_cfg(&bad, "not_a_real_knob = 1\n");
    let out = evio()
        .args(["simulate", "--out"])
        .arg(tmp.path().join("x"))
        .arg("--config")
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Missing dataset directory.
    let out = evio()
        .args(["run", "--dataset"])
        .arg(tmp.path().join("nope"))
        .arg("--out")
        .arg(tmp.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // Dataset without IMU samples: the estimator is visual-inertial.
    let ds = simulate_desk(tmp.path());
    std::fs::write(ds.join("imu.csv"), "t_us,gyro_x,gyro_y,gyro_z,accel_x,accel_y,accel_z\n")
        .unwrap();
    let out = evio()
        .args(["run", "--dataset"])
        .arg(&ds)
        .arg("--out")
        .arg(tmp.path().join("z"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("IMU"), "unclear refusal: {msg}");

    // Trajectories with disjoint time ranges cannot be associated.
    let a = tmp.path().join("a.txt");
    let b = tmp.path().join("b.txt");
    write_cfg(&a, "0.0 0 0 0 0 0 0 1\n0.1 0 0 0 0 0 0 1\n0.2 0 0 0 0 0 0 1\n");
    write_cfg(&b, "9.0 0 0 0 0 0 0 1\n9.1 0 0 0 0 0 0 1\n9.2 0 0 0 0 0 0 1\n");
    let out = evio()
        .args(["eval", "--est"])
        .arg(&a)
        .arg("--gt")
        .arg(&b)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn tracking_hard_failure_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    // Contrast far above the scene's dynamic range leaves only sensor noise:
    // nothing to bootstrap a map from.
    let sim = tmp.path().join("noise.cfg");
    write_cfg(
        &sim,
        "width = 160\nheight = 120\nduration_s = 0.8\ncontrast = 3.0\nnoise_rate_hz = 5\n",
    );
    let ds = tmp.path().join("noise_ds");
    run_ok(evio().args(["simulate", "--out"]).arg(&ds).arg("--config").arg(&sim));

    let cfg = tmp.path().join("strict.cfg");
    write_cfg(&cfg, "bootstrap_deadline_s = 0.4\n");
    let out = evio()
        .args(["run", "--dataset"])
        .arg(&ds)
        .arg("--out")
        .arg(tmp.path().join("run"))
        .arg("--config")
        .arg(&cfg)
        .arg("--single-thread")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn bench_subcommand_reports_timings() {
    let out = run_ok(evio().args(["bench", "--kind", "zncc", "--reps", "40"]));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("speedup"), "unexpected bench output: {text}");

    let out = run_ok(evio().args(["bench", "--kind", "preint", "--reps", "20"]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ns/sample"));
}
