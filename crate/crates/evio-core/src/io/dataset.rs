//! Dataset files: event streams, IMU logs and trajectories.
//!
//! Events use either a compact binary format or CSV. The binary layout is an
//! ASCII header line `EVT1 <width> <height>` followed by fixed 13-byte
//! little-endian records: u64 timestamp in microseconds, u16 x, u16 y, i8
//! polarity. Trajectories use one `t x y z qx qy qz qw` line per sample.

use super::config::ConfigMap;
use super::IoError;
use crate::events::{Event, EventStream};
use crate::geometry::{CameraIntrinsics, Pose, StereoRig};
use crate::imu::{GravityModel, ImuBias, ImuSample};
use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

const EVT1_RECORD: usize = 13;

pub fn write_events_evt1(stream: &EventStream, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "EVT1 {} {}", stream.width, stream.height)?;
    let mut record = [0u8; EVT1_RECORD];
    for e in &stream.events {
        record[0..8].copy_from_slice(&e.t_us.to_le_bytes());
        record[8..10].copy_from_slice(&e.x.to_le_bytes());
        record[10..12].copy_from_slice(&e.y.to_le_bytes());
        record[12] = e.polarity as u8;
        w.write_all(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_evt1(path: &Path) -> Result<EventStream, IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header)?;
    let header_str = String::from_utf8_lossy(&header);
    let parts: Vec<&str> = header_str.split_whitespace().collect();
    if parts.len() != 3 || parts[0] != "EVT1" {
        return Err(IoError::BadHeader {
            expected: "EVT1 <width> <height>",
            got: header_str.trim().to_string(),
        });
    }
    let parse_dim = |s: &str| {
        s.parse::<u32>().map_err(|_| IoError::BadHeader {
            expected: "EVT1 <width> <height>",
            got: header_str.trim().to_string(),
        })
    };
    let width = parse_dim(parts[1])?;
    let height = parse_dim(parts[2])?;

    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() % EVT1_RECORD != 0 {
        return Err(IoError::Truncated("event record"));
    }
    let mut events = Vec::with_capacity(body.len() / EVT1_RECORD);
    for chunk in body.chunks_exact(EVT1_RECORD) {
        events.push(Event {
            t_us: u64::from_le_bytes(chunk[0..8].try_into().unwrap()),
            x: u16::from_le_bytes(chunk[8..10].try_into().unwrap()),
            y: u16::from_le_bytes(chunk[10..12].try_into().unwrap()),
            polarity: chunk[12] as i8,
        });
    }
    Ok(EventStream {
        width,
        height,
        events,
    })
}

pub fn write_events_csv(stream: &EventStream, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# width={} height={}", stream.width, stream.height)?;
    writeln!(w, "t_us,x,y,polarity")?;
    for e in &stream.events {
        writeln!(w, "{},{},{},{}", e.t_us, e.x, e.y, e.polarity)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_events_csv(path: &Path) -> Result<EventStream, IoError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut width = 0u32;
    let mut height = 0u32;
    let mut events = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed == "t_us,x,y,polarity" {
            continue;
        }
        if let Some(meta) = trimmed.strip_prefix('#') {
            for field in meta.split_whitespace() {
                if let Some(v) = field.strip_prefix("width=") {
                    width = v.parse().unwrap_or(0);
                } else if let Some(v) = field.strip_prefix("height=") {
                    height = v.parse().unwrap_or(0);
                }
            }
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 4 {
            return Err(IoError::Parse {
                line: line_no,
                message: format!("expected 4 fields, got {}", fields.len()),
            });
        }
        let bad = |message: String| IoError::Parse {
            line: line_no,
            message,
        };
        events.push(Event {
            t_us: fields[0]
                .parse()
                .map_err(|_| bad(format!("bad timestamp '{}'", fields[0])))?,
            x: fields[1]
                .parse()
                .map_err(|_| bad(format!("bad x '{}'", fields[1])))?,
            y: fields[2]
                .parse()
                .map_err(|_| bad(format!("bad y '{}'", fields[2])))?,
            polarity: fields[3]
                .parse()
                .map_err(|_| bad(format!("bad polarity '{}'", fields[3])))?,
        });
    }
    if width == 0 || height == 0 {
        return Err(IoError::BadHeader {
            expected: "# width=<w> height=<h>",
            got: "missing size comment".into(),
        });
    }
    Ok(EventStream {
        width,
        height,
        events,
    })
}

pub fn write_imu_csv(samples: &[ImuSample], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "t_us,gyro_x,gyro_y,gyro_z,accel_x,accel_y,accel_z")?;
    for s in samples {
        writeln!(
            w,
            "{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9}",
            s.t_us, s.gyro.x, s.gyro.y, s.gyro.z, s.accel.x, s.accel.y, s.accel.z
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_imu_csv(path: &Path) -> Result<Vec<ImuSample>, IoError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut samples = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.starts_with("t_us") {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        if fields.len() != 7 {
            return Err(IoError::Parse {
                line: idx + 1,
                message: format!("expected 7 fields, got {}", fields.len()),
            });
        }
        let num = |k: usize| -> Result<f64, IoError> {
            fields[k].trim().parse().map_err(|_| IoError::Parse {
                line: idx + 1,
                message: format!("bad number '{}'", fields[k]),
            })
        };
        samples.push(ImuSample {
            t_us: fields[0].trim().parse().map_err(|_| IoError::Parse {
                line: idx + 1,
                message: format!("bad timestamp '{}'", fields[0]),
            })?,
            gyro: Vector3::new(num(1)?, num(2)?, num(3)?),
            accel: Vector3::new(num(4)?, num(5)?, num(6)?),
        });
    }
    Ok(samples)
}

/// One pose per line: seconds, position, quaternion (x y z w).
pub fn write_trajectory(samples: &[(f64, Pose)], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# t x y z qx qy qz qw")?;
    for (t, pose) in samples {
        let p = pose.translation;
        let q = pose.rotation;
        writeln!(
            w,
            "{t:.6} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9} {:.9}",
            p.x, p.y, p.z, q.i, q.j, q.k, q.w
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectory(path: &Path) -> Result<Vec<(f64, Pose)>, IoError> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = trimmed
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| IoError::Parse {
                line: idx + 1,
                message: format!("bad number in '{trimmed}'"),
            })?;
        if fields.len() != 8 {
            return Err(IoError::Parse {
                line: idx + 1,
                message: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let q = UnitQuaternion::from_quaternion(Quaternion::new(
            fields[7], fields[4], fields[5], fields[6],
        ));
        out.push((
            fields[0],
            Pose::new(q, Vector3::new(fields[1], fields[2], fields[3])),
        ));
    }
    Ok(out)
}

/// A recording plus everything needed to start estimating on it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub rig: StereoRig,
    pub gravity: GravityModel,
    pub init_pose: Pose,
    pub init_velocity: Vector3<f64>,
    /// Starting bias guess for the estimator, not necessarily the truth.
    pub init_bias: ImuBias,
    pub left: EventStream,
    pub right: EventStream,
    pub imu: Vec<ImuSample>,
    pub groundtruth: Option<Vec<(f64, Pose)>>,
}

pub const DATASET_KEYS: &[&str] = &[
    "width",
    "height",
    "fx",
    "fy",
    "cx",
    "cy",
    "baseline_m",
    "gravity",
    "init_pose",
    "init_velocity",
    "init_bias_gyro",
    "init_bias_accel",
    "events_left",
    "events_right",
    "imu",
    "groundtruth",
];

/// Loads a dataset directory described by its `dataset.cfg`.
pub fn load_dataset(dir: &Path) -> Result<Dataset, IoError> {
    let cfg = ConfigMap::load(&dir.join("dataset.cfg"))?;
    cfg.ensure_known(DATASET_KEYS)?;
    let rig = StereoRig {
        cam: CameraIntrinsics {
            width: cfg.require_u32("width")?,
            height: cfg.require_u32("height")?,
            fx: cfg.require_f64("fx")?,
            fy: cfg.require_f64("fy")?,
            cx: cfg.require_f64("cx")?,
            cy: cfg.require_f64("cy")?,
        },
        baseline_m: cfg.require_f64("baseline_m")?,
    };
    let gravity = GravityModel {
        g_w: cfg
            .get_vector3("gravity")?
            .unwrap_or_else(|| GravityModel::default().g_w),
    };
    let init_pose = cfg
        .get_pose("init_pose")?
        .ok_or_else(|| IoError::MissingKey("init_pose".into()))?;
    let init_velocity = cfg.get_vector3("init_velocity")?.unwrap_or_else(Vector3::zeros);
    let init_bias = ImuBias {
        gyro: cfg
            .get_vector3("init_bias_gyro")?
            .unwrap_or_else(Vector3::zeros),
        accel: cfg
            .get_vector3("init_bias_accel")?
            .unwrap_or_else(Vector3::zeros),
    };

    let read_events = |key: &str| -> Result<EventStream, IoError> {
        let name = cfg.require_str(key)?;
        let path = dir.join(name);
        if name.ends_with(".csv") {
            read_events_csv(&path)
        } else {
            read_events_evt1(&path)
        }
    };
    let left = read_events("events_left")?;
    let right = read_events("events_right")?;
    let imu = read_imu_csv(&dir.join(cfg.require_str("imu")?))?;
    let groundtruth = match cfg.get_str("groundtruth") {
        Some(name) if dir.join(name).exists() => Some(read_trajectory(&dir.join(name))?),
        _ => None,
    };

    Ok(Dataset {
        rig,
        gravity,
        init_pose,
        init_velocity,
        init_bias,
        left,
        right,
        imu,
        groundtruth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn sample_stream() -> EventStream {
        EventStream {
            width: 320,
            height: 240,
            events: vec![
                Event {
                    t_us: 0,
                    x: 1,
                    y: 2,
                    polarity: 1,
                },
                Event {
                    t_us: 17,
                    x: 319,
                    y: 239,
                    polarity: -1,
                },
                Event {
                    t_us: 1_000_000,
                    x: 160,
                    y: 120,
                    polarity: 1,
                },
            ],
        }
    }

    #[test]
    fn evt1_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.evt1");
        let stream = sample_stream();
        write_events_evt1(&stream, &path).unwrap();
        let back = read_events_evt1(&path).unwrap();
        assert_eq!(back.width, 320);
        assert_eq!(back.height, 240);
        assert_eq!(back.events, stream.events);
        // Header line plus three 13-byte records.
        let len = std::fs::metadata(&path).unwrap().len();
        assert_eq!(len, "EVT1 320 240\n".len() as u64 + 3 * 13);
    }

    #[test]
    fn evt1_rejects_corruption() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.evt1");
        write_events_evt1(&sample_stream(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.pop();
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_events_evt1(&path),
            Err(IoError::Truncated(_))
        ));
        std::fs::write(&path, b"EVNT 320 240\n").unwrap();
        assert!(matches!(
            read_events_evt1(&path),
            Err(IoError::BadHeader { .. })
        ));
    }

    #[test]
    fn events_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("ev.csv");
        let stream = sample_stream();
        write_events_csv(&stream, &path).unwrap();
        let back = read_events_csv(&path).unwrap();
        assert_eq!(back.width, stream.width);
        assert_eq!(back.events, stream.events);
    }

    #[test]
    fn imu_csv_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("imu.csv");
        let samples = vec![
            ImuSample {
                t_us: 0,
                gyro: Vector3::new(0.1, -0.2, 0.3),
                accel: Vector3::new(0.0, 0.0, 9.81),
            },
            ImuSample {
                t_us: 1000,
                gyro: Vector3::new(0.11, -0.19, 0.29),
                accel: Vector3::new(0.05, -0.02, 9.79),
            },
        ];
        write_imu_csv(&samples, &path).unwrap();
        let back = read_imu_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in samples.iter().zip(back.iter()) {
            assert_eq!(a.t_us, b.t_us);
            assert!((a.gyro - b.gyro).norm() < 1e-8);
            assert!((a.accel - b.accel).norm() < 1e-8);
        }
    }

    #[test]
    fn trajectory_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let samples = vec![
            (
                0.0,
                Pose::new(
                    UnitQuaternion::from_scaled_axis(Vector3::new(0.1, 0.2, 0.3)),
                    Vector3::new(1.0, 2.0, 3.0),
                ),
            ),
            (
                0.105,
                Pose::new(
                    UnitQuaternion::from_scaled_axis(Vector3::new(-0.2, 0.1, 0.0)),
                    Vector3::new(1.1, 1.9, 3.05),
                ),
            ),
        ];
        write_trajectory(&samples, &path).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in samples.iter().zip(back.iter()) {
            assert!((a.0 - b.0).abs() < 1e-9);
            assert!((a.1.translation - b.1.translation).norm() < 1e-8);
            assert!(a.1.rotation.angle_to(&b.1.rotation) < 1e-8);
        }
    }
}
