//! Minutes-of-day helpers and the simulation clock.

use serde::{Deserialize, Serialize};

/// Minutes since midnight.
pub type Minute = u32;

pub fn parse_hhmm(s: &str) -> Option<Minute> {
    let (h, m) = s.trim().split_once(':')?;
    if h.is_empty() || h.len() > 2 || m.len() != 2 {
        return None;
    }
    let h: u32 = h.parse().ok()?;
    let m: u32 = m.parse().ok()?;
    if h > 24 || m > 59 || (h == 24 && m != 0) {
        return None;
    }
    Some(h * 60 + m)
}

pub fn format_hhmm(m: Minute) -> String {
    format!("{:02}:{:02}", m / 60, m % 60)
}

/// Simulated-day geometry: where the waking window starts and how long a tick lasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayWindow {
    pub start: Minute,
    pub end: Minute,
    pub tick_minutes: u32,
}

impl Default for DayWindow {
    fn default() -> Self {
        Self { start: 6 * 60, end: 23 * 60, tick_minutes: 15 }
    }
}

impl DayWindow {
    pub fn ticks_per_day(&self) -> u32 {
        (self.end - self.start) / self.tick_minutes
    }

    pub fn minute_of(&self, tick: u32) -> Minute {
        self.start + tick * self.tick_minutes
    }

    /// Tick whose start equals `m`, if `m` is on the grid and inside the window.
    pub fn tick_at(&self, m: Minute) -> Option<u32> {
        if m < self.start || m >= self.end || !(m - self.start).is_multiple_of(self.tick_minutes) {
            return None;
        }
        Some((m - self.start) / self.tick_minutes)
    }

    /// Rounds `m` up to the next tick boundary.
    pub fn align_up(&self, m: Minute) -> Minute {
        let off = m.saturating_sub(self.start);
        self.start + off.div_ceil(self.tick_minutes) * self.tick_minutes
    }

    pub fn contains(&self, start: Minute, end: Minute) -> bool {
        start >= self.start && end <= self.end && start < end
    }
}

/// Day index (1-based) and tick inside the day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimClock {
    pub day: u32,
    pub tick: u32,
}

impl SimClock {
    pub fn start() -> Self {
        Self { day: 1, tick: 0 }
    }

    pub fn wall(&self, w: &DayWindow) -> String {
        format_hhmm(w.minute_of(self.tick))
    }
}
