//! Contour-point sampling from accumulation maps and the gradient-ratio split
//! that routes points to static or temporal stereo.

use super::aa::AaMap;
use crate::grid::Grid;
use rand::Rng;

/// Samples up to `n` distinct pixels with nonzero counts, region by region.
///
/// Each region receives a quota proportional to its count mass; within a
/// region pixels are drawn without replacement with probability proportional
/// to their count. Leftover quota (regions with too few distinct pixels) is
/// redistributed over the remaining pixels globally. Pixels closer than
/// `margin` to the image border are excluded so every returned point supports
/// a matching block. Deterministic for a fixed RNG state.
pub fn sample_contour_points(
    aa: &AaMap,
    n: usize,
    margin: u32,
    rng: &mut impl Rng,
) -> Vec<(u32, u32)> {
    let w = aa.counts.width();
    let h = aa.counts.height();
    if n == 0 || w <= 2 * margin || h <= 2 * margin {
        return Vec::new();
    }

    // Candidate pixels bucketed per region, with region masses.
    let n_regions = aa.region_count();
    let mut region_pixels: Vec<Vec<(u32, u32, f64)>> = vec![Vec::new(); n_regions];
    let mut mass = vec![0.0f64; n_regions];
    for y in margin..h - margin {
        for x in margin..w - margin {
            let c = aa.counts.get(x, y);
            if c > 0 {
                let j = aa.region_index(x, y);
                region_pixels[j].push((x, y, c as f64));
                mass[j] += c as f64;
            }
        }
    }
    let total_mass: f64 = mass.iter().sum();
    if total_mass <= 0.0 {
        return Vec::new();
    }

    // Quotas: floor of the proportional share, remainders by largest fraction
    // (ties broken by region index, so the result is deterministic).
    let mut quota = vec![0usize; n_regions];
    let mut fractional: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0usize;
    for j in 0..n_regions {
        let share = n as f64 * mass[j] / total_mass;
        quota[j] = share.floor() as usize;
        assigned += quota[j];
        fractional.push((j, share - share.floor()));
    }
    fractional.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (j, _) in fractional {
        if assigned >= n {
            break;
        }
        quota[j] += 1;
        assigned += 1;
    }

    let mut out = Vec::with_capacity(n);
    for j in 0..n_regions {
        draw_without_replacement(&mut region_pixels[j], quota[j], rng, &mut out);
    }

    // Redistribute unmet quota over whatever pixels remain anywhere.
    if out.len() < n {
        let mut rest: Vec<(u32, u32, f64)> = region_pixels.into_iter().flatten().collect();
        let missing = n - out.len();
        draw_without_replacement(&mut rest, missing, rng, &mut out);
    }
    out
}

/// Draws up to `k` entries weighted by their third component, removing each
/// winner, and appends the pixel coordinates to `out`.
fn draw_without_replacement(
    pool: &mut Vec<(u32, u32, f64)>,
    k: usize,
    rng: &mut impl Rng,
    out: &mut Vec<(u32, u32)>,
) {
    for _ in 0..k {
        if pool.is_empty() {
            return;
        }
        let total: f64 = pool.iter().map(|p| p.2).sum();
        if total <= 0.0 {
            return;
        }
        let mut u = rng.gen_range(0.0..total);
        let mut pick = pool.len() - 1;
        for (i, p) in pool.iter().enumerate() {
            if u < p.2 {
                pick = i;
                break;
            }
            u -= p.2;
        }
        let (x, y, _) = pool.swap_remove(pick);
        out.push((x, y));
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradientSplitConfig {
    /// Points with |dT/dy| / (|dT/dx| + eps) below this go to static stereo.
    pub eta_threshold: f64,
    pub eps: f64,
}

impl Default for GradientSplitConfig {
    fn default() -> Self {
        Self {
            eta_threshold: 1.0,
            eps: 1e-6,
        }
    }
}

/// Splits points by the orientation of the local time-surface gradient:
/// x-dominant gradients (vertical structure) are matchable along the
/// horizontal stereo baseline and go to the static set; the rest (including
/// exact ties) go to the temporal set. Points without a full 3x3 neighborhood
/// are dropped.
pub fn split_by_gradient(
    surface: &Grid<f64>,
    points: &[(u32, u32)],
    cfg: &GradientSplitConfig,
) -> (Vec<(u32, u32)>, Vec<(u32, u32)>) {
    let mut stat = Vec::new();
    let mut temp = Vec::new();
    let w = surface.width();
    let h = surface.height();
    for &(x, y) in points {
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            continue;
        }
        let s = |dx: i32, dy: i32| {
            surface.get((x as i32 + dx) as u32, (y as i32 + dy) as u32)
        };
        let gx = ((s(1, -1) - s(-1, -1)) + 2.0 * (s(1, 0) - s(-1, 0)) + (s(1, 1) - s(-1, 1))) / 8.0;
        let gy = ((s(-1, 1) - s(-1, -1)) + 2.0 * (s(0, 1) - s(0, -1)) + (s(1, 1) - s(1, -1))) / 8.0;
        let eta = gy.abs() / (gx.abs() + cfg.eps);
        if eta < cfg.eta_threshold {
            stat.push((x, y));
        } else {
            temp.push((x, y));
        }
    }
    (stat, temp)
}
