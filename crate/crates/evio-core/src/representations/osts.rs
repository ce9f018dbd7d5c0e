//! Offset-suppressed time surface.
//!
//! Plain Gaussian smoothing of a time surface drags its maxima toward the
//! decayed trail behind a moving edge, biasing registration. Blurring only
//! into the empty (zero) pixels keeps every original value, so edge maxima
//! stay put while the surface still has usable gradients on both sides.

use crate::grid::Grid;

/// Blurs a time surface and keeps original values wherever they are nonzero.
pub fn build_osts(surface: &Grid<f64>, sigma: f64, radius: u32) -> Grid<f64> {
    let blurred = surface.gaussian_blur(sigma, radius);
    let mut out = blurred;
    for (o, &s) in out.data_mut().iter_mut().zip(surface.data()) {
        if s != 0.0 {
            *o = s;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use crate::representations::time_surface::{build_time_surface, LastEventTimes};

    /// Time surface of a vertical edge at column `col` that moved left to
    /// right at `px_per_us`, leaving a decayed trail behind it.
    fn moving_edge_surface(w: u32, h: u32, col: u32, px_per_us: f64, decay_us: f64) -> Grid<f64> {
        let mut last = LastEventTimes::new(w, h);
        let t_ref = 1_000_000u64;
        let mut events = Vec::new();
        for x in 0..=col {
            let age_us = (col - x) as f64 / px_per_us;
            let t = t_ref - age_us.round() as u64;
            for y in 0..h {
                events.push(Event { t_us: t, x: x as u16, y: y as u16, polarity: 1 });
            }
        }
        events.sort_by_key(|e| e.t_us);
        last.ingest(&events);
        build_time_surface(&last, t_ref, decay_us)
    }

    #[test]
    fn originals_are_preserved_exactly() {
        let ts = moving_edge_surface(32, 8, 20, 0.001, 3000.0);
        let osts = build_osts(&ts, 1.0, 2);
        for y in 0..8 {
            for x in 0..32 {
                let v = ts.get(x, y);
                if v != 0.0 {
                    assert_eq!(osts.get(x, y), v, "nonzero pixels must pass through");
                }
            }
        }
    }

    #[test]
    fn blur_fills_only_empty_pixels() {
        let ts = moving_edge_surface(32, 8, 20, 0.001, 3000.0);
        let osts = build_osts(&ts, 1.0, 2);
        // Ahead of the edge the surface is zero but the blur leaks in.
        assert_eq!(ts.get(21, 4), 0.0);
        assert!(osts.get(21, 4) > 0.0);
        assert!(osts.get(22, 4) > 0.0);
        // Far ahead stays zero.
        assert_eq!(osts.get(30, 4), 0.0);
    }

    #[test]
    fn rowwise_argmax_stays_on_the_edge() {
        let ts = moving_edge_surface(48, 8, 24, 0.001, 3000.0);
        let osts = build_osts(&ts, 1.0, 2);
        let blurred = ts.gaussian_blur(1.0, 2);
        for y in 2..6 {
            let argmax = |g: &Grid<f64>| {
                (0..48)
                    .max_by(|&a, &b| g.get(a, y).partial_cmp(&g.get(b, y)).unwrap())
                    .unwrap()
            };
            assert_eq!(argmax(&osts), 24, "offset-suppressed surface keeps the max on the edge");
            assert!(argmax(&blurred) < 24, "plain blur drags the max into the trail");
        }
    }
}
