//! Exponential-decay time surfaces.

use crate::events::Event;
use crate::grid::Grid;

/// Most recent event time per pixel, in microseconds; `i64::MIN` marks pixels
/// that never fired.
#[derive(Debug, Clone)]
pub struct LastEventTimes {
    times: Grid<i64>,
}

impl LastEventTimes {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            times: Grid::filled(width, height, i64::MIN),
        }
    }

    pub fn width(&self) -> u32 {
        self.times.width()
    }

    pub fn height(&self) -> u32 {
        self.times.height()
    }

    /// Ingests a time-ordered batch of events.
    pub fn ingest(&mut self, events: &[Event]) {
        for e in events {
            self.times.set(e.x as u32, e.y as u32, e.t_us as i64);
        }
    }

    #[inline]
    pub fn last_time_us(&self, x: u32, y: u32) -> Option<u64> {
        let t = self.times.get(x, y);
        (t != i64::MIN).then_some(t as u64)
    }
}

/// Time surface at `t_ref_us`: `exp(-(t_ref - t_last)/decay)` per pixel, zero
/// where no event has fired. Values lie in [0, 1]; pixels that fired more
/// recently score higher.
pub fn build_time_surface(last: &LastEventTimes, t_ref_us: u64, decay_us: f64) -> Grid<f64> {
    assert!(decay_us > 0.0);
    let inv = 1.0 / decay_us;
    last.times.map(|t| {
        if t == i64::MIN {
            0.0
        } else {
            let age = (t_ref_us as i64 - t).max(0) as f64;
            (-age * inv).exp()
        }
    })
}

/// `1 - surface`, the field minimized by registration: zero on fresh edges.
pub fn negative_surface(surface: &Grid<f64>) -> Grid<f64> {
    surface.map(|v| 1.0 - v)
}
