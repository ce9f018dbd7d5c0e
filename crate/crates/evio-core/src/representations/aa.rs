//! Adaptive accumulation: per-region event counting that stops once the
//! region's activity reaches its converged level.
//!
//! The sensor is divided into square regions. For each region the mean
//! inter-event interval of the slice predicts the converged activity; events
//! are then counted in time order, updating the running activity, until it
//! reaches a fixed fraction of that target. Fast regions therefore stop early
//! (sharp edges, little motion blur) while slow regions keep every event.

use super::activity::{activity_update, converged_activity};
use crate::events::Event;
use crate::grid::Grid;

#[derive(Debug, Clone, Copy)]
pub struct RegionGridConfig {
    /// Region side length in pixels.
    pub region_size: u32,
    /// Fraction of the converged activity treated as "converged".
    pub convergence_fraction: f64,
}

impl Default for RegionGridConfig {
    fn default() -> Self {
        Self {
            region_size: 32,
            convergence_fraction: 0.95,
        }
    }
}

/// Accumulated event-count map with per-region convergence flags.
#[derive(Debug, Clone)]
pub struct AaMap {
    pub counts: Grid<u32>,
    pub region_size: u32,
    pub regions_x: u32,
    pub regions_y: u32,
    /// True where the region's activity reached its convergence target.
    pub region_converged: Vec<bool>,
    /// Final activity per region.
    pub region_activity: Vec<f64>,
    /// Events consumed (counted) per region.
    pub region_consumed: Vec<u32>,
}

impl AaMap {
    #[inline]
    pub fn region_index(&self, x: u32, y: u32) -> usize {
        let rx = x / self.region_size;
        let ry = y / self.region_size;
        (ry * self.regions_x + rx) as usize
    }

    pub fn region_count(&self) -> usize {
        (self.regions_x * self.regions_y) as usize
    }
}

/// Builds an accumulation map from a time-ordered event slice.
///
/// Events must lie inside `width` x `height`. Regions with fewer than two
/// events (or a zero time span) have no convergence target and count
/// everything.
pub fn build_aa(events: &[Event], width: u32, height: u32, cfg: &RegionGridConfig) -> AaMap {
    assert!(cfg.region_size > 0);
    let rs = cfg.region_size;
    let regions_x = width.div_ceil(rs);
    let regions_y = height.div_ceil(rs);
    let n_regions = (regions_x * regions_y) as usize;

    let region_of = |e: &Event| -> usize {
        let rx = e.x as u32 / rs;
        let ry = e.y as u32 / rs;
        (ry * regions_x + rx) as usize
    };

    // First pass: per-region event count and time span.
    let mut count = vec![0u32; n_regions];
    let mut t_first = vec![0u64; n_regions];
    let mut t_last = vec![0u64; n_regions];
    for e in events {
        debug_assert!((e.x as u32) < width && (e.y as u32) < height);
        let j = region_of(e);
        if count[j] == 0 {
            t_first[j] = e.t_us;
        }
        t_last[j] = e.t_us;
        count[j] += 1;
    }

    // Convergence target per region, where defined.
    let mut target = vec![f64::INFINITY; n_regions];
    for j in 0..n_regions {
        if count[j] >= 2 && t_last[j] > t_first[j] {
            let span_s = (t_last[j] - t_first[j]) as f64 * 1e-6;
            let b = span_s / (count[j] - 1) as f64;
            target[j] = cfg.convergence_fraction * converged_activity(b);
        }
    }

    // Second pass: accumulate in time order until each region converges.
    let mut counts = Grid::filled(width, height, 0u32);
    let mut activity = vec![0.0f64; n_regions];
    let mut prev_t = vec![0u64; n_regions];
    let mut seen = vec![false; n_regions];
    let mut done = vec![false; n_regions];
    let mut consumed = vec![0u32; n_regions];
    for e in events {
        let j = region_of(e);
        if done[j] {
            continue;
        }
        let dt_s = if seen[j] {
            (e.t_us - prev_t[j]) as f64 * 1e-6
        } else {
            0.0
        };
        seen[j] = true;
        prev_t[j] = e.t_us;
        activity[j] = activity_update(activity[j], dt_s);
        *counts.get_mut(e.x as u32, e.y as u32) += 1;
        consumed[j] += 1;
        if activity[j] >= target[j] {
            done[j] = true;
        }
    }

    AaMap {
        counts,
        region_size: rs,
        regions_x,
        regions_y,
        region_converged: done,
        region_activity: activity,
        region_consumed: consumed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_region_events(
        x0: u16,
        y0: u16,
        n: usize,
        dt_us: u64,
        t0: u64,
    ) -> Vec<Event> {
        // Cycles through a 4x4 pixel patch inside one 32 px region.
        (0..n)
            .map(|i| Event {
                t_us: t0 + i as u64 * dt_us,
                x: x0 + (i % 4) as u16,
                y: y0 + ((i / 4) % 4) as u16,
                polarity: if i % 2 == 0 { 1 } else { -1 },
            })
            .collect()
    }

    #[test]
    fn fast_region_truncates_slow_region_keeps_all() {
        // Region A: 10 kHz for 50 ms (500 events). Region B: 1 kHz (50 events).
        let mut events = uniform_region_events(2, 2, 500, 100, 0);
        events.extend(uniform_region_events(40, 2, 50, 1000, 0));
        events.sort_by_key(|e| e.t_us);
        let aa = build_aa(&events, 64, 32, &RegionGridConfig::default());

        let ja = aa.region_index(2, 2);
        let jb = aa.region_index(40, 2);
        assert!(aa.region_converged[ja], "10 kHz region must converge");
        // Converged activity ~ 1/sqrt(1e-4) = 100; convergence needs roughly
        // a * atanh(0.95) ~ 1.8x that many events, well under 500.
        assert!(aa.region_consumed[ja] < 500);
        assert!(aa.region_consumed[ja] > 100);
        // 1 kHz for 50 events: target ~ 0.95 * 31.6, needs ~58 events > 50.
        assert!(!aa.region_converged[jb]);
        assert_eq!(aa.region_consumed[jb], 50);
    }

    #[test]
    fn counts_never_exceed_event_counts() {
        let events = uniform_region_events(0, 0, 97, 57, 3);
        let aa = build_aa(&events, 32, 32, &RegionGridConfig::default());
        let total: u32 = aa.counts.data().iter().sum();
        assert!(total <= 97);
        assert_eq!(total, aa.region_consumed[0]);
    }

    #[test]
    fn regions_are_independent_of_interleaving() {
        // Merging two region streams in any time-consistent order gives the
        // same map, because activity state is per region.
        let a = uniform_region_events(2, 2, 300, 100, 0);
        let b = uniform_region_events(40, 2, 40, 700, 13);
        let mut merged: Vec<Event> = a.iter().chain(b.iter()).copied().collect();
        merged.sort_by_key(|e| e.t_us);
        let mut merged_rev: Vec<Event> = b.iter().chain(a.iter()).copied().collect();
        merged_rev.sort_by_key(|e| e.t_us);

        let m1 = build_aa(&merged, 64, 32, &RegionGridConfig::default());
        let m2 = build_aa(&merged_rev, 64, 32, &RegionGridConfig::default());
        assert_eq!(m1.counts, m2.counts);
        assert_eq!(m1.region_consumed, m2.region_consumed);
    }

    #[test]
    fn degenerate_regions_count_everything() {
        // Single event and simultaneous events: no convergence target.
        let events = vec![
            Event { t_us: 5, x: 1, y: 1, polarity: 1 },
            Event { t_us: 5, x: 2, y: 1, polarity: 1 },
            Event { t_us: 5, x: 3, y: 1, polarity: -1 },
        ];
        let aa = build_aa(&events, 32, 32, &RegionGridConfig::default());
        assert!(!aa.region_converged[0]);
        assert_eq!(aa.region_consumed[0], 3);
    }
}
