//! Layer 3: innovation-gated adaptive EKF over `[x, y, θ, v]`.
//!
//! Prediction propagates a unicycle with the IMU yaw rate and replaces the
//! speed with the measured wheel speed. The update measures position only.
//! When the innovation norm exceeds `tau`, the measurement covariance is
//! inflated by `(‖r‖/tau)^(2κ)`, which is continuous at the threshold.

use nalgebra::{Matrix2, Matrix2x4, Matrix4, Vector2, Vector4};

use super::multilat::PositionFix;
use super::LocalizationError;
use crate::geometry::{wrap_angle, Pose2D};
use crate::sensor::ImuSample;

/// Sampling period the process-noise diagonal is specified at, seconds.
pub const Q_REFERENCE_DT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    /// Innovation threshold, meters. `f64::INFINITY` disables gating.
    pub tau: f64,
    pub inflation_exponent: f64,
    /// Number of recent updates the reliability score looks at.
    pub reliability_window: usize,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            inflation_exponent: 1.0,
            reliability_window: 10,
        }
    }
}

impl GateConfig {
    pub fn disabled() -> Self {
        Self {
            tau: f64::INFINITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), LocalizationError> {
        if !(self.tau > 0.0) || !(self.inflation_exponent >= 1.0) || self.reliability_window == 0 {
            return Err(LocalizationError::InvalidGate);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Process-noise diagonal per `Q_REFERENCE_DT`; scaled linearly with dt.
    pub process_noise: [f64; 4],
    /// Base measurement covariance, m².
    pub r0: Matrix2<f64>,
    pub gate: GateConfig,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            process_noise: [1e-4, 1e-4, 1e-5, 1e-3],
            r0: Matrix2::from_diagonal(&Vector2::new(0.05 * 0.05, 0.05 * 0.05)),
            gate: GateConfig::default(),
        }
    }
}

impl FilterConfig {
    pub fn process_noise_for(&self, dt: f64) -> Matrix4<f64> {
        let s = dt / Q_REFERENCE_DT;
        Matrix4::from_diagonal(&Vector4::from(self.process_noise).scale(s))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub covariance: Matrix4<f64>,
    /// Innovation of the most recent update, meters.
    pub last_innovation: Vector2<f64>,
    /// Whether the most recent update was down-weighted.
    pub gated: bool,
    pub timestamp: f64,
}

impl FusedState {
    pub fn new(pose: Pose2D, v: f64, covariance: Matrix4<f64>, timestamp: f64) -> Self {
        Self {
            x: pose.x,
            y: pose.y,
            theta: wrap_angle(pose.theta),
            v,
            covariance,
            last_innovation: Vector2::zeros(),
            gated: false,
            timestamp,
        }
    }

    pub fn pose(&self) -> Pose2D {
        Pose2D::new(self.x, self.y, self.theta)
    }

    pub fn mean(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.theta, self.v)
    }

    fn with_mean(mut self, m: Vector4<f64>) -> Self {
        self.x = m[0];
        self.y = m[1];
        self.theta = wrap_angle(m[2]);
        self.v = m[3];
        self
    }
}

/// Unicycle propagation `f(state)` with the yaw rate and speed from `imu`.
pub fn propagate(mean: &Vector4<f64>, imu: &ImuSample, dt: f64) -> Vector4<f64> {
    let (x, y, th, v) = (mean[0], mean[1], mean[2], mean[3]);
    Vector4::new(
        x + v * th.cos() * dt,
        y + v * th.sin() * dt,
        th + imu.yaw_rate * dt,
        imu.speed,
    )
}

/// Jacobian of [`propagate`] with respect to the state.
pub fn propagation_jacobian(mean: &Vector4<f64>, dt: f64) -> Matrix4<f64> {
    let (th, v) = (mean[2], mean[3]);
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, -v * th.sin() * dt, th.cos() * dt,
        0.0, 1.0,  v * th.cos() * dt, th.sin() * dt,
        0.0, 0.0, 1.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    );
    f
}

fn symmetrize(p: &Matrix4<f64>) -> Matrix4<f64> {
    (p + p.transpose()) * 0.5
}

pub fn is_positive_definite(p: &Matrix4<f64>) -> bool {
    p.iter().all(|v| v.is_finite()) && (p - p.transpose()).amax() <= 1e-9 * p.amax().max(1.0) && p.cholesky().is_some()
}

/// Prior `x̂⁻` from IMU propagation.
pub fn iaekf_predict(
    state: &FusedState,
    imu: &ImuSample,
    dt: f64,
    cfg: &FilterConfig,
) -> Result<FusedState, LocalizationError> {
    if !(dt > 0.0) {
        return Err(LocalizationError::NonPositiveDt(dt));
    }
    let m = state.mean();
    let f = propagation_jacobian(&m, dt);
    let p = symmetrize(&(f * state.covariance * f.transpose() + cfg.process_noise_for(dt)));
    let mut out = state.with_mean(propagate(&m, imu, dt));
    out.covariance = p;
    out.timestamp = state.timestamp + dt;
    Ok(out)
}

/// Measurement covariance multiplier for an innovation of norm `r_norm`.
pub fn inflation_factor(r_norm: f64, gate: &GateConfig) -> f64 {
    if r_norm > gate.tau {
        (r_norm / gate.tau).powf(2.0 * gate.inflation_exponent)
    } else {
        1.0
    }
}

/// Posterior from a smoothed UWB fix, down-weighting large innovations.
pub fn iaekf_update(
    prior: &FusedState,
    fix: &PositionFix,
    gate: &GateConfig,
    r0: &Matrix2<f64>,
) -> Result<FusedState, LocalizationError> {
    if !is_positive_definite(&prior.covariance) {
        return Err(LocalizationError::NonPdCovariance);
    }
    let innovation = Vector2::new(fix.smoothed.x - prior.x, fix.smoothed.y - prior.y);
    let norm = innovation.norm();
    let gated = norm > gate.tau;
    let r = r0 * inflation_factor(norm, gate);

    let h = Matrix2x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0);
    let p = &prior.covariance;
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().ok_or(LocalizationError::NonPdCovariance)?;
    let k = p * h.transpose() * s_inv;
    let m = prior.mean() + k * innovation;
    // Joseph form keeps the posterior symmetric positive-definite.
    let ikh = Matrix4::identity() - k * h;
    let p_post = symmetrize(&(ikh * p * ikh.transpose() + k * r * k.transpose()));

    let mut out = prior.with_mean(m);
    out.covariance = p_post;
    out.last_innovation = innovation;
    out.gated = gated;
    out.timestamp = prior.timestamp.max(fix.timestamp);
    Ok(out)
}

/// `1 − gated / len` over the given history.
pub fn reliability(history: &[FusedState]) -> Result<f64, LocalizationError> {
    reliability_from_flags(history.iter().map(|s| s.gated))
}

pub fn reliability_from_flags(flags: impl IntoIterator<Item = bool>) -> Result<f64, LocalizationError> {
    let (mut n, mut g) = (0usize, 0usize);
    for f in flags {
        n += 1;
        g += f as usize;
    }
    if n == 0 {
        return Err(LocalizationError::EmptyHistory);
    }
    Ok(1.0 - g as f64 / n as f64)
}
