//! Map and image exports: PFM float images, 16-bit PGM, ASCII PLY clouds.

use super::IoError;
use crate::grid::Grid;
use nalgebra::Vector3;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

/// Grayscale PFM, negative scale (little-endian), rows bottom to top.
pub fn write_pfm(grid: &Grid<f64>, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "Pf\n{} {}\n-1.0\n", grid.width(), grid.height())?;
    for y in (0..grid.height()).rev() {
        for x in 0..grid.width() {
            w.write_all(&(grid.get(x, y) as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_pfm(path: &Path) -> Result<Grid<f64>, IoError> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim() != "Pf" {
        return Err(IoError::BadHeader {
            expected: "Pf",
            got: line.trim().to_string(),
        });
    }
    line.clear();
    r.read_line(&mut line)?;
    let dims: Vec<u32> = line
        .split_whitespace()
        .filter_map(|s| s.parse().ok())
        .collect();
    if dims.len() != 2 {
        return Err(IoError::BadHeader {
            expected: "<width> <height>",
            got: line.trim().to_string(),
        });
    }
    let (width, height) = (dims[0], dims[1]);
    line.clear();
    r.read_line(&mut line)?;
    let scale: f64 = line.trim().parse().map_err(|_| IoError::BadHeader {
        expected: "scale",
        got: line.trim().to_string(),
    })?;
    let little_endian = scale < 0.0;

    let mut bytes = vec![0u8; width as usize * height as usize * 4];
    r.read_exact(&mut bytes)
        .map_err(|_| IoError::Truncated("pfm pixels"))?;
    let mut grid = Grid::filled(width, height, 0.0f64);
    let mut k = 0;
    for y in (0..height).rev() {
        for x in 0..width {
            let raw: [u8; 4] = bytes[k..k + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            grid.set(x, y, f64::from(v));
            k += 4;
        }
    }
    Ok(grid)
}

/// 16-bit binary PGM; values clamped to [0, 1] and scaled to 65535.
pub fn write_pgm16(grid: &Grid<f64>, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(w, "P5\n{} {}\n65535\n", grid.width(), grid.height())?;
    for y in 0..grid.height() {
        for x in 0..grid.width() {
            let v = (grid.get(x, y).clamp(0.0, 1.0) * 65535.0).round() as u16;
            w.write_all(&v.to_be_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// ASCII PLY point cloud with float coordinates.
pub fn write_ply(points: &[Vector3<f64>], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    write!(
        w,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )?;
    for p in points {
        writeln!(w, "{:.6} {:.6} {:.6}", p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}
