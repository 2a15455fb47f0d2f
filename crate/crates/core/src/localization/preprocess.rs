//! Layer 1: per-anchor plausibility gating and median filtering of raw ranges.

use std::collections::VecDeque;

use crate::sensor::RangingSample;

/// Per-anchor ring buffer of accepted `(distance, timestamp)` pairs.
#[derive(Debug, Clone)]
pub struct RangeWindow {
    capacity: usize,
    buf: VecDeque<(f64, f64)>,
}

impl RangeWindow {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "window capacity must be positive");
        Self {
            capacity,
            buf: VecDeque::with_capacity(capacity),
        }
    }

    /// Builds a window from `(distance, timestamp)` pairs, oldest first.
    pub fn from_samples(capacity: usize, samples: &[(f64, f64)]) -> Self {
        let mut w = Self::new(capacity);
        for &s in samples {
            w.push(s.0, s.1);
        }
        w
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn last(&self) -> Option<(f64, f64)> {
        self.buf.back().copied()
    }

    /// Mean timestamp of the buffered samples: the epoch a median of a
    /// steadily changing range best represents.
    pub fn mean_time(&self) -> Option<f64> {
        (!self.buf.is_empty()).then(|| self.buf.iter().map(|s| s.1).sum::<f64>() / self.buf.len() as f64)
    }

    pub fn distances(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().map(|s| s.0)
    }

    fn push(&mut self, d: f64, t: f64) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back((d, t));
    }

    /// Drops entries stamped before `cutoff`.
    pub fn evict_older_than(&mut self, cutoff: f64) {
        while self.buf.front().is_some_and(|s| s.1 < cutoff) {
            self.buf.pop_front();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layer1Outcome {
    /// Median of the window after admitting the sample.
    Accepted(f64),
    /// Implied range rate exceeded the plausibility bound (or time did not advance).
    Rejected { implied_rate: f64 },
}

impl Layer1Outcome {
    pub fn accepted(self) -> Option<f64> {
        match self {
            Layer1Outcome::Accepted(d) => Some(d),
            Layer1Outcome::Rejected { .. } => None,
        }
    }
}

/// Median with the even-count convention of averaging the middle pair.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty());
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Rejects `new_sample` when the range changed faster than
/// `v_max + 3·los_sigma/Δt`; otherwise admits it and returns the window median.
pub fn layer1_filter(
    window: &mut RangeWindow,
    new_sample: &RangingSample,
    v_max: f64,
    los_sigma: f64,
) -> Layer1Outcome {
    if let Some((d_prev, t_prev)) = window.last() {
        let dt = new_sample.timestamp - t_prev;
        let jump = (new_sample.distance - d_prev).abs();
        if dt <= 0.0 {
            return Layer1Outcome::Rejected {
                implied_rate: f64::INFINITY,
            };
        }
        if jump > v_max * dt + 3.0 * los_sigma {
            return Layer1Outcome::Rejected {
                implied_rate: jump / dt,
            };
        }
    }
    window.push(new_sample.distance, new_sample.timestamp);
    let mut vals: Vec<f64> = window.distances().collect();
    Layer1Outcome::Accepted(median(&mut vals))
}
