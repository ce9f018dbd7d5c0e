//! Static (instantaneous) stereo block matching on left/right time surfaces.

use super::depth::{DepthPoint, DepthSource};
use super::zncc::{zncc_scan_fast, View2};
use crate::geometry::StereoRig;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy)]
pub struct StereoMatchConfig {
    /// Odd block side length in pixels.
    pub block: u32,
    /// Largest disparity searched, in pixels.
    pub max_disparity: u32,
    /// Minimum accepted correlation score.
    pub min_score: f64,
    /// Required gap between the best score and the best score found more than
    /// `margin_exclusion_px` away in disparity.
    pub min_margin: f64,
    pub margin_exclusion_px: u32,
    /// One-sigma disparity uncertainty of an accepted integer match.
    pub sigma_d_px: f64,
}

impl Default for StereoMatchConfig {
    fn default() -> Self {
        Self {
            block: 15,
            max_disparity: 100,
            min_score: 0.6,
            min_margin: 0.1,
            margin_exclusion_px: 2,
            sigma_d_px: 0.5,
        }
    }
}

/// Matches the block around `(x, y)` in the left surface against the same row
/// of the right surface over disparities `1..=max_disparity`, and converts an
/// accepted match to inverse depth.
///
/// Rejections: block support leaving either image, flat blocks, best score
/// below `min_score`, or an ambiguous score profile (margin test).
pub fn static_stereo_match(
    ts_left: &Grid<f64>,
    ts_right: &Grid<f64>,
    x: u32,
    y: u32,
    rig: &StereoRig,
    cfg: &StereoMatchConfig,
) -> Option<DepthPoint> {
    assert!(cfg.block % 2 == 1 && cfg.block >= 3);
    assert_eq!(ts_left.width(), ts_right.width());
    assert_eq!(ts_left.height(), ts_right.height());
    let half = cfg.block / 2;
    let w = ts_left.width();
    let h = ts_left.height();
    if x < half || y < half || x + half >= w || y + half >= h {
        return None;
    }
    // Right block centers live at x - d; keep the whole block in the image.
    let d_max = cfg.max_disparity.min(x - half);
    if d_max < 1 {
        return None;
    }

    let patch = View2::from_grid(ts_left, x - half, y - half, cfg.block, cfg.block);
    let strip_x0 = x - d_max - half;
    let strip_w = d_max + cfg.block;
    let strip = View2::from_grid(ts_right, strip_x0, y - half, strip_w, cfg.block);

    // Window start s corresponds to disparity d = d_max - s.
    let scores = zncc_scan_fast(&patch, &strip);
    let mut best: Option<(u32, f64)> = None;
    for (s, score) in scores.iter().enumerate() {
        if let Some(v) = score {
            let d = d_max - s as u32;
            if d >= 1 && best.map_or(true, |(_, bv)| *v > bv) {
                best = Some((d, *v));
            }
        }
    }
    let (d_best, v_best) = best?;
    if v_best < cfg.min_score {
        return None;
    }
    let mut runner_up = f64::NEG_INFINITY;
    for (s, score) in scores.iter().enumerate() {
        if let Some(v) = score {
            let d = d_max - s as u32;
            if d.abs_diff(d_best) > cfg.margin_exclusion_px && *v > runner_up {
                runner_up = *v;
            }
        }
    }
    if runner_up.is_finite() && v_best - runner_up < cfg.min_margin {
        return None;
    }

    let denom = rig.cam.fx * rig.baseline_m;
    Some(DepthPoint {
        x,
        y,
        rho: rig.disparity_to_inverse_depth(d_best as f64),
        variance: (cfg.sigma_d_px / denom) * (cfg.sigma_d_px / denom),
        source: DepthSource::Static,
    })
}
