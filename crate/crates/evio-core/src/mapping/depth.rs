//! Inverse-depth points, pairwise fusion and local-map maintenance.
//!
//! Static and temporal estimates are complementary rather than commensurate:
//! cross-source collisions are resolved by letting the static estimate win
//! outright instead of averaging, which would pull well-constrained static
//! depths toward the weaker temporal ones. Probabilistic (inverse-variance)
//! fusion is applied between estimates of the same pixel elsewhere: on map
//! updates and after reprojection.

use std::collections::BTreeMap;

use crate::geometry::{CameraIntrinsics, Pose};
use crate::grid::Grid;
use nalgebra::Vector3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DepthSource {
    Static,
    Temporal,
}

/// Semi-dense inverse-depth estimate at an integer pixel of its reference
/// frame. `rho` is 1/depth in 1/m; `variance` is var(rho).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthPoint {
    pub x: u32,
    pub y: u32,
    pub rho: f64,
    pub variance: f64,
    pub source: DepthSource,
}

/// Fuses two estimates of the same pixel.
///
/// Estimates within `2 * sqrt(var_a + var_b)` of each other are combined with
/// inverse-variance weights (equal inputs halve the variance); otherwise the
/// lower-variance estimate survives. Ties keep `a`.
pub fn fuse_depth(a: &DepthPoint, b: &DepthPoint) -> DepthPoint {
    debug_assert_eq!((a.x, a.y), (b.x, b.y));
    debug_assert!(a.variance > 0.0 && b.variance > 0.0);
    let keep_lower = || if b.variance < a.variance { *b } else { *a };
    if (a.rho - b.rho).abs() <= 2.0 * (a.variance + b.variance).sqrt() {
        let wa = 1.0 / a.variance;
        let wb = 1.0 / b.variance;
        DepthPoint {
            x: a.x,
            y: a.y,
            rho: (wa * a.rho + wb * b.rho) / (wa + wb),
            variance: 1.0 / (wa + wb),
            source: keep_lower().source,
        }
    } else {
        keep_lower()
    }
}

/// Union of a static and a temporal result set; on pixel collisions the
/// static estimate wins. Output is sorted by (y, x).
pub fn merge_maps(static_pts: &[DepthPoint], temporal_pts: &[DepthPoint]) -> Vec<DepthPoint> {
    let mut by_pixel: BTreeMap<(u32, u32), DepthPoint> = BTreeMap::new();
    for p in temporal_pts {
        by_pixel.insert((p.y, p.x), *p);
    }
    for p in static_pts {
        by_pixel.insert((p.y, p.x), *p);
    }
    by_pixel.into_values().collect()
}

/// Semi-dense depth map anchored to a reference camera frame.
#[derive(Debug, Clone)]
pub struct LocalDepthMap {
    /// Time the reference frame was captured.
    pub t_ref_us: u64,
    /// World-from-camera pose of the reference frame.
    pub reference: Pose,
    /// Points keyed by (y, x) for deterministic iteration.
    pub points: BTreeMap<(u32, u32), DepthPoint>,
}

impl LocalDepthMap {
    pub fn new(t_ref_us: u64, reference: Pose) -> Self {
        Self {
            t_ref_us,
            reference,
            points: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Inserts a point, fusing with any existing estimate at the same pixel.
    pub fn insert_fused(&mut self, p: DepthPoint) {
        self.points
            .entry((p.y, p.x))
            .and_modify(|q| *q = fuse_depth(q, &p))
            .or_insert(p);
    }

    /// Rasterizes the semi-dense map into a dense inverse-depth image in the
    /// reference frame; pixels without an estimate are 0.
    pub fn to_inverse_depth_grid(&self, width: u32, height: u32) -> Grid<f64> {
        let mut grid = Grid::filled(width, height, 0.0);
        for p in self.points.values() {
            if p.x < width && p.y < height {
                grid.set(p.x, p.y, p.rho);
            }
        }
        grid
    }

    /// Keeps only the `max_points` lowest-variance points.
    pub fn prune_to(&mut self, max_points: usize) {
        if self.points.len() <= max_points {
            return;
        }
        let mut all: Vec<DepthPoint> = self.points.values().copied().collect();
        all.sort_by(|a, b| {
            a.variance
                .partial_cmp(&b.variance)
                .unwrap()
                .then(a.y.cmp(&b.y))
                .then(a.x.cmp(&b.x))
        });
        all.truncate(max_points);
        self.points = all.into_iter().map(|p| ((p.y, p.x), p)).collect();
    }
}

/// Reprojects every point of `map` into a new reference frame.
///
/// `new_from_old` maps old-reference camera coordinates into the new frame.
/// Points that land behind the camera or outside the image are dropped;
/// collisions after pixel rounding are fused. Variances are scaled by the
/// squared sensitivity of the new inverse depth to the old one.
pub fn propagate_map(
    map: &LocalDepthMap,
    new_from_old: &Pose,
    new_reference: Pose,
    new_t_ref_us: u64,
    cam: &CameraIntrinsics,
) -> LocalDepthMap {
    let mut out = LocalDepthMap::new(new_t_ref_us, new_reference);
    let rot = new_from_old.rotation.to_rotation_matrix();
    let r3 = rot.matrix().row(2).transpose();
    for p in map.points.values() {
        if p.rho <= 0.0 {
            continue;
        }
        let dir = cam.back_project(p.x as f64, p.y as f64);
        let x_old = dir / p.rho;
        let x_new = new_from_old.transform(&x_old);
        if x_new.z <= 1e-6 {
            continue;
        }
        let uv = match cam.project(&x_new) {
            Some(uv) => uv,
            None => continue,
        };
        if !cam.contains(uv.x, uv.y) {
            continue;
        }
        let rho_new = 1.0 / x_new.z;
        // d(rho_new)/d(rho_old) for a fixed pixel ray:
        // z_new = (r3 . dir)/rho_old + t_z  =>  scale = (r3 . dir) rho_new^2 / rho_old^2.
        let scale = r3.dot(&Vector3::new(dir.x, dir.y, dir.z)) * rho_new * rho_new
            / (p.rho * p.rho);
        out.insert_fused(DepthPoint {
            x: uv.x.round() as u32,
            y: uv.y.round() as u32,
            rho: rho_new,
            variance: (p.variance * scale * scale).max(1e-18),
            source: p.source,
        });
    }
    out
}
