//! Zero-mean normalized cross-correlation over image patches.
//!
//! [`zncc_scan_naive`] recomputes every statistic per candidate window and is
//! the correctness oracle. [`zncc_scan_fast`] maintains the right-window sum
//! and sum of squares recursively, adding the entering column and dropping the
//! leaving one, so only the raw inner product remains O(patch) per candidate.

use crate::grid::Grid;

/// Windows whose centered variance sum falls below this are treated as flat
/// (no correlation defined).
pub const ZNCC_VAR_EPS: f64 = 1e-12;

/// Borrowed rectangular view into a row-major buffer.
#[derive(Debug, Clone, Copy)]
pub struct View2<'a> {
    data: &'a [f64],
    stride: usize,
    rows: usize,
    cols: usize,
}

impl<'a> View2<'a> {
    pub fn new(data: &'a [f64], stride: usize, rows: usize, cols: usize) -> Self {
        assert!(cols <= stride);
        assert!((rows - 1) * stride + cols <= data.len());
        Self {
            data,
            stride,
            rows,
            cols,
        }
    }

    /// View of a `w` x `h` rectangle of a grid with top-left corner `(x0, y0)`.
    pub fn from_grid(g: &'a Grid<f64>, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        assert!(x0 + w <= g.width() && y0 + h <= g.height());
        let stride = g.width() as usize;
        let start = y0 as usize * stride + x0 as usize;
        let end = (y0 + h - 1) as usize * stride + (x0 + w) as usize;
        Self {
            data: &g.data()[start..end],
            stride,
            rows: h as usize,
            cols: w as usize,
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.stride..r * self.stride + self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sub-view of `width` columns starting at column `c0`.
    pub fn columns(&self, c0: usize, width: usize) -> View2<'a> {
        assert!(c0 + width <= self.cols);
        View2 {
            data: &self.data[c0..],
            stride: self.stride,
            rows: self.rows,
            cols: width,
        }
    }
}

/// Textbook ZNCC between two equal-shape patches, with population statistics:
/// `sum((a-ua)(b-ub)) / sqrt(sum((a-ua)^2) sum((b-ub)^2))`.
///
/// `None` when either patch is (numerically) flat.
pub fn zncc_naive(a: &View2, b: &View2) -> Option<f64> {
    assert_eq!((a.rows, a.cols), (b.rows, b.cols));
    let n = (a.rows * a.cols) as f64;
    let mut sum_a = 0.0;
    let mut sum_b = 0.0;
    for r in 0..a.rows {
        for (&va, &vb) in a.row(r).iter().zip(b.row(r)) {
            sum_a += va;
            sum_b += vb;
        }
    }
    let mean_a = sum_a / n;
    let mean_b = sum_b / n;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    for r in 0..a.rows {
        for (&va, &vb) in a.row(r).iter().zip(b.row(r)) {
            let da = va - mean_a;
            let db = vb - mean_b;
            cov += da * db;
            var_a += da * da;
            var_b += db * db;
        }
    }
    if var_a < ZNCC_VAR_EPS || var_b < ZNCC_VAR_EPS {
        return None;
    }
    Some(cov / (var_a * var_b).sqrt())
}

/// Scores `patch` against every window of `strip` (window start columns
/// 0..=strip.cols - patch.cols), recomputing all statistics per window.
pub fn zncc_scan_naive(patch: &View2, strip: &View2) -> Vec<Option<f64>> {
    assert_eq!(patch.rows, strip.rows);
    assert!(patch.cols <= strip.cols);
    let n_windows = strip.cols - patch.cols + 1;
    (0..n_windows)
        .map(|c0| zncc_naive(patch, &strip.columns(c0, patch.cols)))
        .collect()
}

/// Same scores as [`zncc_scan_naive`], with the window sum and sum of squares
/// updated incrementally column by column.
pub fn zncc_scan_fast(patch: &View2, strip: &View2) -> Vec<Option<f64>> {
    assert_eq!(patch.rows, strip.rows);
    assert!(patch.cols <= strip.cols);
    let m = patch.rows;
    let n = patch.cols;
    let count = (m * n) as f64;
    let n_windows = strip.cols - n + 1;

    // Patch statistics once for the whole scan.
    let mut sum_p = 0.0;
    let mut sumsq_p = 0.0;
    for r in 0..m {
        for &v in patch.row(r) {
            sum_p += v;
            sumsq_p += v * v;
        }
    }
    let mean_p = sum_p / count;
    let var_p = sumsq_p - sum_p * sum_p / count;
    if var_p < ZNCC_VAR_EPS {
        return vec![None; n_windows];
    }

    // Column sums of the strip, each computed exactly once: entering columns
    // are accumulated fresh and remembered so they can be dropped when they
    // leave the window.
    let col_stats = |c: usize| -> (f64, f64) {
        let mut s = 0.0;
        let mut sq = 0.0;
        for r in 0..m {
            let v = strip.row(r)[c];
            s += v;
            sq += v * v;
        }
        (s, sq)
    };
    let mut col_cache: Vec<(f64, f64)> = (0..n).map(col_stats).collect();
    let mut t_sum: f64 = col_cache.iter().map(|c| c.0).sum();
    let mut t_sumsq: f64 = col_cache.iter().map(|c| c.1).sum();
    let mut cache_head = 0usize; // index of the window's leftmost column stats

    let mut out = Vec::with_capacity(n_windows);
    for c0 in 0..n_windows {
        if c0 > 0 {
            // Slide right: drop the column that left, add the one that entered.
            let (ls, lq) = col_cache[cache_head];
            let (es, eq) = col_stats(c0 + n - 1);
            col_cache[cache_head] = (es, eq);
            cache_head = (cache_head + 1) % n;
            t_sum += es - ls;
            t_sumsq += eq - lq;
        }
        let var_w = t_sumsq - t_sum * t_sum / count;
        if var_w < ZNCC_VAR_EPS {
            out.push(None);
            continue;
        }
        // Four independent accumulators keep the FP adds off one serial
        // dependency chain; the final dot is what dominates each window.
        let (mut a0, mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0, 0.0);
        for r in 0..m {
            let pr = patch.row(r);
            let wr = &strip.row(r)[c0..c0 + n];
            let mut pc = pr.chunks_exact(4);
            let mut wc = wr.chunks_exact(4);
            for (p4, w4) in (&mut pc).zip(&mut wc) {
                a0 += p4[0] * w4[0];
                a1 += p4[1] * w4[1];
                a2 += p4[2] * w4[2];
                a3 += p4[3] * w4[3];
            }
            for (&pv, &wv) in pc.remainder().iter().zip(wc.remainder()) {
                a0 += pv * wv;
            }
        }
        let dot = (a0 + a1) + (a2 + a3);
        let cov = dot - mean_p * t_sum;
        out.push(Some(cov / (var_p * var_w).sqrt()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_buffer(rng: &mut impl Rng, len: usize) -> Vec<f64> {
        (0..len).map(|_| rng.gen_range(0.0..1.0)).collect()
    }

    #[test]
    fn fast_scan_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..200 {
            let m = rng.gen_range(3..12);
            let n = rng.gen_range(3..12);
            let strip_cols = n + rng.gen_range(0..40);
            let patch_buf = random_buffer(&mut rng, m * n);
            let strip_buf = random_buffer(&mut rng, m * strip_cols);
            let patch = View2::new(&patch_buf, n, m, n);
            let strip = View2::new(&strip_buf, strip_cols, m, strip_cols);
            let naive = zncc_scan_naive(&patch, &strip);
            let fast = zncc_scan_fast(&patch, &strip);
            assert_eq!(naive.len(), fast.len());
            for (a, b) in naive.iter().zip(&fast) {
                match (a, b) {
                    (Some(x), Some(y)) => assert!((x - y).abs() < 1e-9, "{x} vs {y}"),
                    (None, None) => {}
                    _ => panic!("flat-window determinations disagree: {a:?} vs {b:?}"),
                }
            }
        }
    }

    #[test]
    fn perfect_match_scores_one_and_inversion_scores_minus_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let buf = random_buffer(&mut rng, 15 * 15);
        let inv: Vec<f64> = buf.iter().map(|v| 1.0 - v).collect();
        let a = View2::new(&buf, 15, 15, 15);
        let b = View2::new(&inv, 15, 15, 15);
        let same = zncc_naive(&a, &a).unwrap();
        assert!((same - 1.0).abs() < 1e-12);
        let opp = zncc_naive(&a, &b).unwrap();
        assert!((opp + 1.0).abs() < 1e-12);
    }

    #[test]
    fn affine_intensity_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let buf = random_buffer(&mut rng, 9 * 9);
        let scaled: Vec<f64> = buf.iter().map(|v| 3.5 * v + 0.25).collect();
        let a = View2::new(&buf, 9, 9, 9);
        let b = View2::new(&scaled, 9, 9, 9);
        let z = zncc_naive(&a, &b).unwrap();
        assert!((z - 1.0).abs() < 1e-12, "positive affine maps preserve ZNCC");
    }

    #[test]
    fn flat_patches_are_rejected() {
        let flat = vec![0.42f64; 25];
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let tex = random_buffer(&mut rng, 25);
        let a = View2::new(&flat, 5, 5, 5);
        let b = View2::new(&tex, 5, 5, 5);
        assert_eq!(zncc_naive(&a, &b), None);
        assert_eq!(zncc_naive(&b, &a), None);
        assert_eq!(zncc_naive(&a, &a), None);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..50 {
            let patch_buf = random_buffer(&mut rng, 7 * 7);
            let strip_buf = random_buffer(&mut rng, 7 * 30);
            let patch = View2::new(&patch_buf, 7, 7, 7);
            let strip = View2::new(&strip_buf, 30, 7, 30);
            for s in zncc_scan_fast(&patch, &strip).into_iter().flatten() {
                assert!(s.abs() <= 1.0 + 1e-9);
            }
        }
    }
}
