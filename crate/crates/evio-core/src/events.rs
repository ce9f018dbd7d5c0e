//! Event stream primitives.
//!
//! Timestamps are integer microseconds throughout; polarities are +1/-1.

/// A single sensor event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    /// Microseconds since stream start.
    pub t_us: u64,
    pub x: u16,
    pub y: u16,
    /// +1 for brightness increase, -1 for decrease.
    pub polarity: i8,
}

/// A time-ordered event stream with the sensor geometry it was recorded on.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStream {
    pub width: u32,
    pub height: u32,
    pub events: Vec<Event>,
}

impl EventStream {
    pub fn new(width: u32, height: u32, events: Vec<Event>) -> Self {
        Self {
            width,
            height,
            events,
        }
    }

    pub fn is_sorted(&self) -> bool {
        self.events.windows(2).all(|w| w[0].t_us <= w[1].t_us)
    }

    pub fn in_bounds(&self) -> bool {
        self.events
            .iter()
            .all(|e| (e.x as u32) < self.width && (e.y as u32) < self.height)
    }

    /// Index of the first event with `t_us >= t`.
    pub fn lower_bound(&self, t: u64) -> usize {
        self.events.partition_point(|e| e.t_us < t)
    }

    /// Events with timestamps in `[t0, t1)`.
    pub fn slice_range(&self, t0: u64, t1: u64) -> &[Event] {
        let a = self.lower_bound(t0);
        let b = self.lower_bound(t1);
        &self.events[a..b]
    }
}
