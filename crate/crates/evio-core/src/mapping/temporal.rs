//! Temporal block matching: depth from two accumulation maps of the same
//! camera taken at different times, given the relative pose between them.
//!
//! Candidate inverse depths are swept along the motion-induced epipolar curve
//! in the earlier map; the curve must be long enough and steep enough (more
//! than 10 degrees from horizontal) to add information the static stereo pair
//! cannot, otherwise the point is rejected.

use super::depth::{DepthPoint, DepthSource};
use super::zncc::{zncc_naive, View2};
use crate::geometry::{CameraIntrinsics, Pose};
use crate::grid::Grid;
use nalgebra::Vector2;

#[derive(Debug, Clone, Copy)]
pub struct TemporalMatchConfig {
    /// Odd block side length in pixels.
    pub block: u32,
    /// Uniform inverse-depth samples across the search range.
    pub rho_samples: u32,
    pub min_score: f64,
    /// Margin test analogous to the static matcher; the exclusion zone is
    /// measured in pixels along the projected epipolar segment.
    pub min_margin: f64,
    pub margin_exclusion_px: f64,
    /// Minimum projected epipolar segment length in pixels.
    pub min_epipolar_px: f64,
    /// Segments within this angle of horizontal are degenerate with the
    /// stereo baseline and rejected.
    pub max_horizontal_deg: f64,
    /// One-sigma matching uncertainty along the epipolar curve, in pixels.
    pub sigma_d_px: f64,
    /// Golden-section refinement iterations around the best sweep sample.
    pub golden_iters: u32,
}

impl Default for TemporalMatchConfig {
    fn default() -> Self {
        Self {
            block: 15,
            rho_samples: 60,
            min_score: 0.6,
            min_margin: 0.1,
            margin_exclusion_px: 3.0,
            min_epipolar_px: 2.0,
            max_horizontal_deg: 10.0,
            sigma_d_px: 0.5,
            golden_iters: 24,
        }
    }
}

/// Matches the block around `(x, y)` of the current map against the previous
/// map along the inverse-depth sweep, and returns the refined estimate.
///
/// `prev_from_curr` maps current-frame camera coordinates into the previous
/// frame. The returned variance scales with the inverse of the local epipolar
/// speed: short segments (small temporal baseline) give weak depth.
pub fn temporal_stereo_match(
    aa_curr: &Grid<f64>,
    aa_prev: &Grid<f64>,
    x: u32,
    y: u32,
    prev_from_curr: &Pose,
    cam: &CameraIntrinsics,
    rho_range: (f64, f64),
    cfg: &TemporalMatchConfig,
) -> Option<DepthPoint> {
    assert!(cfg.block % 2 == 1 && cfg.block >= 3);
    assert!(rho_range.0 > 0.0 && rho_range.1 > rho_range.0);
    assert!(cfg.rho_samples >= 4);
    let half = cfg.block / 2;
    if x < half || y < half || x + half >= aa_curr.width() || y + half >= aa_curr.height() {
        return None;
    }

    let dir = cam.back_project(x as f64, y as f64);
    let project_at = |rho: f64| -> Option<Vector2<f64>> {
        let p_prev = prev_from_curr.transform(&(dir / rho));
        if p_prev.z <= 1e-6 {
            return None;
        }
        cam.project(&p_prev)
    };

    // Degeneracy checks on the projected segment.
    let p0 = project_at(rho_range.0)?;
    let p1 = project_at(rho_range.1)?;
    let seg = p1 - p0;
    let len = seg.norm();
    if len < cfg.min_epipolar_px {
        return None;
    }
    let angle_deg = seg.y.abs().atan2(seg.x.abs()).to_degrees();
    if angle_deg < cfg.max_horizontal_deg {
        return None;
    }

    // Reference block in the current map.
    let patch = View2::from_grid(aa_curr, x - half, y - half, cfg.block, cfg.block);
    let block = cfg.block as usize;
    let mut warped = vec![0.0f64; block * block];

    // Rigid block shift into the previous map, sampled bilinearly. Frame gaps
    // are short, so in-plane rotation over the block is negligible.
    let mut score_at = |rho: f64| -> Option<f64> {
        let c = project_at(rho)?;
        for (i, dy) in (-(half as i64)..=half as i64).enumerate() {
            for (j, dx) in (-(half as i64)..=half as i64).enumerate() {
                let v = aa_prev.sample_bilinear(c.x + dx as f64, c.y + dy as f64)?;
                warped[i * block + j] = v;
            }
        }
        zncc_naive(&patch, &View2::new(&warped, block, block, block))
    };

    let n = cfg.rho_samples;
    let step = (rho_range.1 - rho_range.0) / (n - 1) as f64;
    let mut sweep: Vec<(f64, Vector2<f64>, f64)> = Vec::with_capacity(n as usize);
    for i in 0..n {
        let rho = rho_range.0 + step * i as f64;
        if let Some(c) = project_at(rho) {
            if let Some(v) = score_at(rho) {
                sweep.push((rho, c, v));
            }
        }
    }
    let best_i = sweep
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .2.partial_cmp(&b.1 .2).unwrap())
        .map(|(i, _)| i)?;
    let (_, best_c, best_v) = sweep[best_i];
    if best_v < cfg.min_score {
        return None;
    }
    let runner_up = sweep
        .iter()
        .filter(|(_, c, _)| (c - best_c).norm() > cfg.margin_exclusion_px)
        .map(|&(_, _, v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if runner_up.is_finite() && best_v - runner_up < cfg.min_margin {
        return None;
    }

    // Golden-section refinement on the bracket around the best sample.
    let best_rho = sweep[best_i].0;
    let mut lo = (best_rho - step).max(rho_range.0);
    let mut hi = (best_rho + step).min(rho_range.1);
    let inv_phi = 0.618_033_988_749_894_9;
    let mut m1 = hi - inv_phi * (hi - lo);
    let mut m2 = lo + inv_phi * (hi - lo);
    let mut f1 = score_at(m1).unwrap_or(f64::NEG_INFINITY);
    let mut f2 = score_at(m2).unwrap_or(f64::NEG_INFINITY);
    for _ in 0..cfg.golden_iters {
        if f1 < f2 {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + inv_phi * (hi - lo);
            f2 = score_at(m2).unwrap_or(f64::NEG_INFINITY);
        } else {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - inv_phi * (hi - lo);
            f1 = score_at(m1).unwrap_or(f64::NEG_INFINITY);
        }
    }
    let rho = 0.5 * (lo + hi);

    // Local epipolar speed: pixels traveled per unit inverse depth.
    let da = project_at((rho - 0.5 * step).max(rho_range.0))?;
    let db = project_at((rho + 0.5 * step).min(rho_range.1))?;
    let ds = (db - da).norm();
    if ds < 1e-9 {
        return None;
    }
    let drho_ds = step / ds;
    Some(DepthPoint {
        x,
        y,
        rho,
        variance: (cfg.sigma_d_px * drho_ds).powi(2),
        source: DepthSource::Temporal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{UnitQuaternion, Vector3};

    fn cam() -> CameraIntrinsics {
        CameraIntrinsics {
            width: 320,
            height: 240,
            fx: 320.0,
            fy: 320.0,
            cx: 159.5,
            cy: 119.5,
        }
    }

    /// Horizontal-stripe texture on a fronto-parallel plane at depth `z`,
    /// viewed from a camera at world position `origin` (axes aligned).
    fn render_plane(cam: &CameraIntrinsics, origin: Vector3<f64>, z: f64) -> Grid<f64> {
        Grid::from_fn(cam.width, cam.height, |u, v| {
            let dir = cam.back_project(u as f64, v as f64);
            let t = (z - origin.z) / dir.z;
            let p = origin + dir * t;
            // Smooth y-texture with incommensurate frequencies, so shifted
            // copies decorrelate quickly.
            0.5 + 0.25 * (p.y * 30.0).sin() + 0.22 * (p.y * 9.1 + 0.7).sin()
        })
    }

    /// Like `render_plane` but with an aperiodic per-cell jitter texture:
    /// the correlation peak is sharp and there are no repeating near-misses,
    /// so long sweeps stay unambiguous.
    fn render_plane_sharp(cam: &CameraIntrinsics, origin: Vector3<f64>, z: f64) -> Grid<f64> {
        let hash = |k: f64| -> f64 {
            let v = (k * 12.9898).sin() * 43758.5453;
            (v - v.floor()) - 0.5
        };
        Grid::from_fn(cam.width, cam.height, |u, v| {
            let dir = cam.back_project(u as f64, v as f64);
            let t = (z - origin.z) / dir.z;
            let p = origin + dir * t;
            0.5 + 0.28 * hash((p.y * 24.0).floor()) + 0.08 * (p.y * 9.1 + 0.7).sin()
        })
    }

    #[test]
    fn vertical_motion_recovers_plane_depth() {
        let cam = cam();
        let z = 5.0;
        // Camera rises 0.12 m between the previous and current frames.
        let prev_origin = Vector3::new(0.0, 0.12, 0.0);
        let aa_prev = render_plane(&cam, prev_origin, z);
        let aa_curr = render_plane(&cam, Vector3::zeros(), z);
        // X_prev = X_curr + (0, 0.12, 0): world y is camera y here.
        let prev_from_curr = Pose::new(UnitQuaternion::identity(), -prev_origin);
        for &(x, y) in &[(160u32, 80u32), (100, 150), (220, 60)] {
            let m = temporal_stereo_match(
                &aa_curr,
                &aa_prev,
                x,
                y,
                &prev_from_curr,
                &cam,
                (0.05, 0.5),
                &TemporalMatchConfig::default(),
            )
            .unwrap_or_else(|| panic!("no temporal match at ({x},{y})"));
            assert_relative_eq!(m.rho, 1.0 / z, max_relative = 0.02);
            assert!(m.variance > 0.0);
        }
    }

    #[test]
    fn forward_motion_recovers_depth_off_axis() {
        let cam = cam();
        let z = 5.0;
        // Camera advances 0.3 m; previous frame was 0.3 m behind.
        // Plane fixed at world z = 5.3; current depth is then 5.3.
        let prev_origin = Vector3::new(0.0, 0.0, -0.3);
        let aa_prev = render_plane(&cam, prev_origin, z + 0.3);
        let aa_curr = render_plane(&cam, Vector3::zeros(), z + 0.3);
        let prev_from_curr = Pose::new(UnitQuaternion::identity(), -prev_origin);
        // Point well above the focus of expansion: epipolar line is vertical.
        let m = temporal_stereo_match(
            &aa_curr,
            &aa_prev,
            160,
            40,
            &prev_from_curr,
            &cam,
            (0.05, 0.5),
            &TemporalMatchConfig::default(),
        )
        .expect("no match");
        assert_relative_eq!(m.rho, 1.0 / 5.3, max_relative = 0.05);
    }

    #[test]
    fn horizontal_motion_is_rejected_as_degenerate() {
        let cam = cam();
        let aa = render_plane(&cam, Vector3::zeros(), 5.0);
        let prev_from_curr = Pose::new(UnitQuaternion::identity(), Vector3::new(0.12, 0.0, 0.0));
        assert!(temporal_stereo_match(
            &aa,
            &aa,
            160,
            80,
            &prev_from_curr,
            &cam,
            (0.05, 0.5),
            &TemporalMatchConfig::default(),
        )
        .is_none());
    }

    #[test]
    fn tiny_baseline_is_rejected() {
        let cam = cam();
        let aa = render_plane(&cam, Vector3::zeros(), 5.0);
        let prev_from_curr = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 1e-4, 0.0));
        assert!(temporal_stereo_match(
            &aa,
            &aa,
            160,
            80,
            &prev_from_curr,
            &cam,
            (0.05, 0.5),
            &TemporalMatchConfig::default(),
        )
        .is_none());
    }

    #[test]
    fn variance_shrinks_with_longer_epipolar_segments() {
        let cam = cam();
        let z = 5.0;
        let small = Vector3::new(0.0, 0.12, 0.0);
        let large = Vector3::new(0.0, 0.6, 0.0);
        let curr = render_plane_sharp(&cam, Vector3::zeros(), z);
        let cfg = TemporalMatchConfig {
            // Dense sweep: the sharp texture decorrelates within a couple of
            // pixels, so coarse sampling can straddle the peak.
            rho_samples: 120,
            ..TemporalMatchConfig::default()
        };
        let mut vars = Vec::new();
        for step in [small, large] {
            let prev = render_plane_sharp(&cam, step, z);
            let m = temporal_stereo_match(
                &curr,
                &prev,
                160,
                80,
                &Pose::new(UnitQuaternion::identity(), -step),
                &cam,
                (0.05, 0.5),
                &cfg,
            )
            .expect("match");
            vars.push(m.variance);
        }
        assert!(
            vars[1] < vars[0] / 4.0,
            "5x baseline should cut variance by ~25x: {vars:?}"
        );
    }
}
