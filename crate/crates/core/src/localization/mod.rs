//! Three-layer UWB/IMU fusion localization.
//!
//! Layer 1 gates and median-filters raw ranges per anchor, layer 2
//! multilaterates a position and applies an exponential moving average, and
//! layer 3 fuses the smoothed fix with IMU propagation in an
//! innovation-gated adaptive EKF. [`Localizer`] wires the layers into a step
//! interface fed with timestamp-ordered sensor events.

mod filter;
mod multilat;
mod preprocess;

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

pub use filter::{
    inflation_factor, iaekf_predict, iaekf_update, is_positive_definite, propagate,
    propagation_jacobian, reliability, reliability_from_flags, FilterConfig, FusedState, GateConfig,
    Q_REFERENCE_DT,
};
pub use multilat::{layer2_multilaterate, layer2_smooth, range_objective, FilteredRange, PositionFix};
pub use preprocess::{layer1_filter, median, Layer1Outcome, RangeWindow};

use crate::geometry::{wrap_angle, Point2, Pose2D, Rect};
use crate::sensor::{ImuSample, RangingSample};
use crate::world::LotScenario;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocalizationError {
    #[error("insufficient anchors: {0} accepted ranges, need 3")]
    InsufficientAnchors(usize),
    #[error("anchors are collinear at the solution")]
    CollinearAnchors,
    #[error("smoothing factor {0} outside (0, 1]")]
    InvalidAlpha(f64),
    #[error("nonpositive time step {0}")]
    NonPositiveDt(f64),
    #[error("covariance is not positive-definite")]
    NonPdCovariance,
    #[error("reliability of an empty history")]
    EmptyHistory,
    #[error("invalid gate configuration")]
    InvalidGate,
    #[error("clock skew: event at {event} precedes {last}")]
    ClockSkew { event: f64, last: f64 },
    #[error("ranging sample from unknown anchor {0}")]
    UnknownAnchor(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensorEvent {
    Ranging(RangingSample),
    Imu(ImuSample),
}

impl SensorEvent {
    pub fn timestamp(&self) -> f64 {
        match self {
            SensorEvent::Ranging(r) => r.timestamp,
            SensorEvent::Imu(i) => i.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizerConfig {
    /// Layer-1 window length W.
    pub window: usize,
    /// Window entries older than this are dropped, seconds.
    pub window_max_age: f64,
    /// Range-rate bound of the layer-1 plausibility gate, m/s.
    pub range_rate_max: f64,
    pub los_sigma: f64,
    /// Layer-2 EMA factor.
    pub alpha: f64,
    pub filter: FilterConfig,
    /// Initial covariance diagonal `[x, y, θ, v]`.
    pub initial_covariance: [f64; 4],
    /// Shift each smoothed fix by the odometry displacement since the epoch
    /// its median and EMA stages effectively represent.
    pub latency_compensation: bool,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            window: 5,
            window_max_age: 1.0,
            range_rate_max: 2.0,
            los_sigma: 0.05,
            alpha: 0.6,
            filter: FilterConfig::default(),
            initial_covariance: [0.05, 0.05, 0.01, 0.01],
            latency_compensation: true,
        }
    }
}

impl LocalizerConfig {
    /// Plain EKF: identical pipeline with gating disabled.
    pub fn ungated(mut self) -> Self {
        self.filter.gate = GateConfig::disabled();
        self
    }
}

/// Per-epoch bookkeeping for evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LocalizerStats {
    pub epochs: usize,
    pub fixes: usize,
    pub rejected_ranges: usize,
    pub gated_updates: usize,
}

/// One vehicle's localization pipeline.
#[derive(Debug, Clone)]
pub struct Localizer {
    cfg: LocalizerConfig,
    anchors: BTreeMap<u32, Point2>,
    bounds: Rect,
    windows: BTreeMap<u32, RangeWindow>,
    pending: Vec<RangingSample>,
    last_event_t: f64,
    last_fix: Option<PositionFix>,
    smoothed_prev: Option<Point2>,
    smoothed_time: Option<f64>,
    odometry: Pose2D,
    odometry_history: VecDeque<(f64, Point2)>,
    fix_offset: Option<Point2>,
    state: FusedState,
    gate_history: VecDeque<bool>,
    stats: LocalizerStats,
}

impl Localizer {
    pub fn new(cfg: LocalizerConfig, scenario: &LotScenario, initial: Pose2D, t0: f64) -> Self {
        let anchors = scenario.anchors.iter().map(|a| (a.id, a.position)).collect();
        let cov = Matrix4::from_diagonal(&Vector4::from(cfg.initial_covariance));
        Self {
            anchors,
            bounds: scenario.bounds,
            windows: BTreeMap::new(),
            pending: Vec::new(),
            last_event_t: t0,
            last_fix: None,
            smoothed_prev: None,
            smoothed_time: None,
            odometry: initial,
            odometry_history: VecDeque::from([(t0, initial.position())]),
            fix_offset: None,
            state: FusedState::new(initial, 0.0, cov, t0),
            gate_history: VecDeque::new(),
            stats: LocalizerStats::default(),
            cfg,
        }
    }

    pub fn config(&self) -> &LocalizerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FusedState {
        &self.state
    }

    pub fn last_fix(&self) -> Option<&PositionFix> {
        self.last_fix.as_ref()
    }

    pub fn stats(&self) -> LocalizerStats {
        self.stats
    }

    /// Adds a fixed offset to every layer-2 position (scripted jump injection).
    pub fn set_fix_offset(&mut self, offset: Option<Point2>) {
        self.fix_offset = offset;
    }

    /// Reliability over the last `reliability_window` updates (1.0 before any).
    pub fn reliability(&self) -> f64 {
        reliability_from_flags(self.gate_history.iter().copied()).unwrap_or(1.0)
    }

    /// Feeds one event. Ranging samples sharing a timestamp form an epoch that
    /// is processed by [`flush`](Self::flush) or by the next later event.
    pub fn feed(&mut self, event: SensorEvent) -> Result<Option<PositionFix>, LocalizationError> {
        let t = event.timestamp();
        if t < self.last_event_t {
            return Err(LocalizationError::ClockSkew {
                event: t,
                last: self.last_event_t,
            });
        }
        let mut fix = None;
        if self.pending.first().is_some_and(|p| p.timestamp < t) {
            fix = self.flush()?;
        }
        self.last_event_t = t;
        match event {
            SensorEvent::Ranging(r) => {
                if !self.anchors.contains_key(&r.anchor_id) {
                    return Err(LocalizationError::UnknownAnchor(r.anchor_id));
                }
                self.pending.push(r);
            }
            SensorEvent::Imu(imu) => {
                let dt = imu.timestamp - self.state.timestamp;
                if dt > 0.0 {
                    self.state = iaekf_predict(&self.state, &imu, dt, &self.cfg.filter)?;
                    self.advance_odometry(&imu, dt);
                } else {
                    self.state.v = imu.speed;
                }
            }
        }
        Ok(fix)
    }

    /// Processes the pending ranging epoch through all three layers.
    pub fn flush(&mut self) -> Result<Option<PositionFix>, LocalizationError> {
        if self.pending.is_empty() {
            return Ok(None);
        }
        let epoch = std::mem::take(&mut self.pending);
        let t = epoch[0].timestamp;
        self.stats.epochs += 1;

        let mut ranges = Vec::with_capacity(epoch.len());
        let mut times = Vec::with_capacity(epoch.len());
        for s in &epoch {
            let w = self
                .windows
                .entry(s.anchor_id)
                .or_insert_with(|| RangeWindow::new(self.cfg.window));
            w.evict_older_than(t - self.cfg.window_max_age);
            match layer1_filter(w, s, self.cfg.range_rate_max, self.cfg.los_sigma) {
                Layer1Outcome::Accepted(d) => {
                    ranges.push(FilteredRange {
                        anchor: self.anchors[&s.anchor_id],
                        distance: d,
                    });
                    times.push(w.mean_time().unwrap_or(t));
                }
                Layer1Outcome::Rejected { .. } => self.stats.rejected_ranges += 1,
            }
        }

        let guess = self
            .last_fix
            .map(|f| f.position)
            .unwrap_or(Point2::new(self.state.x, self.state.y));
        let mut fix = match layer2_multilaterate(&ranges, guess, &self.bounds, t) {
            Ok(f) => f,
            Err(LocalizationError::InsufficientAnchors(_)) | Err(LocalizationError::CollinearAnchors) => {
                return Ok(None)
            }
            Err(e) => return Err(e),
        };
        if let Some(off) = self.fix_offset {
            fix.position = fix.position + off;
        }
        fix.smoothed = layer2_smooth(self.smoothed_prev, &fix, self.cfg.alpha)?;
        self.smoothed_prev = Some(fix.smoothed);
        let fix_time = times.iter().sum::<f64>() / times.len() as f64;
        let eff_time = match self.smoothed_time {
            Some(prev) => self.cfg.alpha * fix_time + (1.0 - self.cfg.alpha) * prev,
            None => fix_time,
        };
        self.smoothed_time = Some(eff_time);
        self.last_fix = Some(fix);
        self.stats.fixes += 1;

        let mut measured = fix;
        if self.cfg.latency_compensation {
            measured.smoothed = fix.smoothed + (self.odometry_at(t) - self.odometry_at(eff_time));
        }
        self.state = iaekf_update(&self.state, &measured, &self.cfg.filter.gate, &self.cfg.filter.r0)?;
        if self.state.gated {
            self.stats.gated_updates += 1;
        }
        self.gate_history.push_back(self.state.gated);
        while self.gate_history.len() > self.cfg.filter.gate.reliability_window {
            self.gate_history.pop_front();
        }
        Ok(Some(fix))
    }
}

impl Localizer {
    /// Odometry history kept for latency compensation, seconds.
    const ODOMETRY_SPAN: f64 = 2.0;

    fn advance_odometry(&mut self, imu: &ImuSample, dt: f64) {
        let o = self.odometry;
        let (s, c) = o.theta.sin_cos();
        self.odometry = Pose2D::new(o.x + imu.speed * c * dt, o.y + imu.speed * s * dt, o.theta + imu.yaw_rate * dt);
        self.odometry_history.push_back((imu.timestamp, self.odometry.position()));
        while self
            .odometry_history
            .front()
            .is_some_and(|(t, _)| *t < imu.timestamp - Self::ODOMETRY_SPAN)
        {
            self.odometry_history.pop_front();
        }
    }

    /// Dead-reckoned position at `t`, interpolated and clamped to the history.
    fn odometry_at(&self, t: f64) -> Point2 {
        let h = &self.odometry_history;
        let i = h.partition_point(|(ti, _)| *ti <= t);
        match (i.checked_sub(1).and_then(|j| h.get(j)), h.get(i)) {
            (Some(&(t0, p0)), Some(&(t1, p1))) => p0 + (p1 - p0) * ((t - t0) / (t1 - t0)),
            (Some(&(_, p)), None) | (None, Some(&(_, p))) => p,
            (None, None) => self.odometry.position(),
        }
    }
}

/// Layer-2-only pose: smoothed fixes with heading from finite differences
/// over a minimum baseline, flipped while the vehicle is reversing.
#[derive(Debug, Clone)]
pub struct RawUwbTracker {
    history: VecDeque<(f64, Point2)>,
    heading: f64,
    min_baseline: f64,
    horizon: f64,
}

impl RawUwbTracker {
    pub fn new(initial: Pose2D) -> Self {
        Self {
            history: VecDeque::new(),
            heading: initial.theta,
            min_baseline: 0.3,
            horizon: 1.0,
        }
    }

    pub fn update(&mut self, fix: &PositionFix, reversing: bool) {
        let p = fix.smoothed;
        self.history.push_back((fix.timestamp, p));
        while self.history.front().is_some_and(|(t, _)| *t < fix.timestamp - self.horizon) {
            self.history.pop_front();
        }
        // Newest older point at least `min_baseline` away.
        if let Some((_, q)) = self
            .history
            .iter()
            .rev()
            .find(|(_, q)| q.distance(p) >= self.min_baseline)
        {
            let travel = (p - *q).angle();
            self.heading = if reversing { wrap_angle(travel + std::f64::consts::PI) } else { travel };
        }
    }

    pub fn pose(&self) -> Option<Pose2D> {
        self.history
            .back()
            .map(|(_, p)| Pose2D::new(p.x, p.y, self.heading))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensor::Regime;
    use crate::world::load_scenario;

    fn scenario() -> LotScenario {
        load_scenario(
            r#"{
            "bounds": {"min": [0, 0], "max": [20, 20]},
            "grid_resolution": 0.5,
            "anchors": [{"id": 1, "pos": [0, 0]}, {"id": 2, "pos": [20, 0]}, {"id": 3, "pos": [0, 20]}, {"id": 4, "pos": [20, 20]}],
            "slots": [{"id": "A1", "center": [15, 15], "heading": 0, "length": 4, "width": 2, "occupied": false}],
            "entry_pose": {"x": 2, "y": 2, "theta": 0}
        }"#,
        )
        .unwrap()
    }

    #[test]
    fn clock_skew_rejected() {
        let s = scenario();
        let mut loc = Localizer::new(LocalizerConfig::default(), &s, s.entry_pose, 0.0);
        loc.feed(SensorEvent::Imu(ImuSample { yaw_rate: 0.0, speed: 0.0, timestamp: 1.0 })).unwrap();
        let err = loc.feed(SensorEvent::Imu(ImuSample { yaw_rate: 0.0, speed: 0.0, timestamp: 0.5 }));
        assert!(matches!(err, Err(LocalizationError::ClockSkew { .. })));
    }

    #[test]
    fn stationary_exact_ranges_converge() {
        let s = scenario();
        let truth = Point2::new(6.0, 4.0);
        let mut loc = Localizer::new(LocalizerConfig::default(), &s, Pose2D::new(5.5, 4.5, 0.0), 0.0);
        for k in 1..=50 {
            let t = k as f64 * 0.1;
            loc.feed(SensorEvent::Imu(ImuSample { yaw_rate: 0.0, speed: 0.0, timestamp: t })).unwrap();
            for a in &s.anchors {
                let r = RangingSample {
                    anchor_id: a.id,
                    distance: a.position.distance(truth),
                    timestamp: t,
                    regime: Regime::Los,
                    nlos_bias: 0.0,
                };
                loc.feed(SensorEvent::Ranging(r)).unwrap();
            }
            loc.flush().unwrap();
        }
        let st = loc.state();
        assert!(Point2::new(st.x, st.y).distance(truth) < 1e-3);
        assert!(is_positive_definite(&st.covariance));
        assert_eq!(loc.stats().fixes, 50);
    }

    #[test]
    fn raw_tracker_heading_from_motion() {
        let mut tr = RawUwbTracker::new(Pose2D::new(0.0, 0.0, 1.0));
        for k in 0..10 {
            let p = Point2::new(0.1 * k as f64, 0.1 * k as f64);
            tr.update(&PositionFix { position: p, residual_rms: 0.0, anchor_count: 4, timestamp: 0.1 * k as f64, smoothed: p }, false);
        }
        assert!((tr.pose().unwrap().theta - std::f64::consts::FRAC_PI_4).abs() < 1e-9);
    }
}
