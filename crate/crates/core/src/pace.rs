//! Replay pacing: map capture timestamps to wall-clock emission offsets.
//!
//! The virtual clock is anchored at the first event. At scale `s > 0`, an
//! event at capture time `t` is due `(t - t0) / s` after the replay starts;
//! at scale 0 everything is due immediately.

use std::ops::Range;
use std::time::{Duration, Instant};

use crate::time::Timestamp;

/// Events `range` share one timestamp and are due together at `offset`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacedBatch {
    pub offset: Duration,
    pub range: Range<usize>,
}

/// Wall-clock offset of `t` relative to `origin` at `scale`.
///
/// `t` before `origin` maps to zero. Non-finite or non-positive scales mean
/// no pacing.
pub fn scaled_offset(origin: Timestamp, t: Timestamp, scale: f64) -> Duration {
    if !(scale.is_finite() && scale > 0.0) {
        return Duration::ZERO;
    }
    let gap = t.since(origin);
    if scale == 1.0 {
        gap
    } else {
        Duration::from_secs_f64(gap.as_secs_f64() / scale)
    }
}

/// Group `timestamps` (sorted ascending) into equal-timestamp batches and
/// schedule each one.
pub fn pace_events(timestamps: &[Timestamp], scale: f64) -> Vec<PacedBatch> {
    let Some(&origin) = timestamps.first() else {
        return Vec::new();
    };
    let mut out: Vec<PacedBatch> = Vec::new();
    for (i, &t) in timestamps.iter().enumerate() {
        match out.last_mut() {
            Some(last) if timestamps[last.range.start] == t => last.range.end = i + 1,
            _ => out.push(PacedBatch {
                offset: scaled_offset(origin, t, scale),
                range: i..i + 1,
            }),
        }
    }
    out
}

/// Wall-clock side of a replay. Time spent stalled on a slow consumer is
/// added back via [`ReplayClock::pause_for`], so later events keep their
/// relative spacing instead of bursting.
#[derive(Debug, Clone)]
pub struct ReplayClock {
    scale: f64,
    virtual_origin: Option<Timestamp>,
    wall_origin: Instant,
    paused: Duration,
}

impl ReplayClock {
    pub fn new(scale: f64, wall_origin: Instant) -> Self {
        ReplayClock {
            scale,
            virtual_origin: None,
            wall_origin,
            paused: Duration::ZERO,
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn is_paced(&self) -> bool {
        self.scale.is_finite() && self.scale > 0.0
    }

    /// Instant at which an event stamped `t` should go out. The first call
    /// fixes the virtual origin.
    pub fn due(&mut self, t: Timestamp) -> Instant {
        let origin = *self.virtual_origin.get_or_insert(t);
        self.wall_origin + self.paused + scaled_offset(origin, t, self.scale)
    }

    /// Shift every later deadline by `d`.
    pub fn pause_for(&mut self, d: Duration) {
        self.paused += d;
    }

    pub fn paused(&self) -> Duration {
        self.paused
    }
}
