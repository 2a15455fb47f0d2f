//! Differential-drive (unicycle) kinematics.

use serde::{Deserialize, Serialize};

use super::ControlError;
use crate::geometry::{wrap_angle, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleLimits {
    pub v_max: f64,
    pub omega_max: f64,
    /// Largest speed change between consecutive commands, m/s.
    pub dv_max: f64,
    /// Largest turn-rate change between consecutive commands, rad/s.
    pub domega_max: f64,
}

impl Default for VehicleLimits {
    fn default() -> Self {
        Self { v_max: 1.5, omega_max: 1.5, dv_max: 0.5, domega_max: 0.8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose2D,
    pub v: f64,
    pub omega: f64,
    pub timestamp: f64,
}

impl VehicleState {
    pub fn at_rest(pose: Pose2D, timestamp: f64) -> Self {
        Self { pose, v: 0.0, omega: 0.0, timestamp }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlCommand {
    pub v: f64,
    pub omega: f64,
}

impl ControlCommand {
    pub const ZERO: Self = Self { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }

    pub fn norm(&self) -> f64 {
        self.v.hypot(self.omega)
    }

    /// Within the actuator box (tolerance for rounding).
    pub fn within_box(&self, lim: &VehicleLimits) -> bool {
        self.v.abs() <= lim.v_max + 1e-9 && self.omega.abs() <= lim.omega_max + 1e-9
    }

    /// Within the rate limits relative to `prev`.
    pub fn within_rate(&self, prev: &ControlCommand, lim: &VehicleLimits) -> bool {
        (self.v - prev.v).abs() <= lim.dv_max + 1e-9 && (self.omega - prev.omega).abs() <= lim.domega_max + 1e-9
    }
}

/// Exact unicycle integration over `dt` under a constant command.
pub fn vehicle_step(
    state: &VehicleState,
    cmd: &ControlCommand,
    dt: f64,
    limits: &VehicleLimits,
) -> Result<VehicleState, ControlError> {
    if !(dt > 0.0) {
        return Err(ControlError::NonPositiveDt(dt));
    }
    if !cmd.within_box(limits) || !cmd.v.is_finite() || !cmd.omega.is_finite() {
        return Err(ControlError::LimitViolation { v: cmd.v, omega: cmd.omega });
    }
    Ok(integrate(state, cmd, dt))
}

pub(crate) fn integrate(state: &VehicleState, cmd: &ControlCommand, dt: f64) -> VehicleState {
    let Pose2D { x, y, theta } = state.pose;
    let (v, w) = (cmd.v, cmd.omega);
    let (nx, ny) = if w.abs() < 1e-9 {
        (x + v * dt * theta.cos(), y + v * dt * theta.sin())
    } else {
        let th1 = theta + w * dt;
        (x + (v / w) * (th1.sin() - theta.sin()), y + (v / w) * (theta.cos() - th1.cos()))
    };
    VehicleState {
        pose: Pose2D { x: nx, y: ny, theta: wrap_angle(theta + w * dt) },
        v,
        omega: w,
        timestamp: state.timestamp + dt,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn lim() -> VehicleLimits {
        VehicleLimits { v_max: 2.0, omega_max: 2.0, ..Default::default() }
    }

    #[test]
    fn straight_step() {
        let s = vehicle_step(&VehicleState::default(), &ControlCommand::new(1.0, 0.0), 1.0, &lim()).unwrap();
        assert_eq!((s.pose.x, s.pose.y, s.pose.theta), (1.0, 0.0, 0.0));
    }

    #[test]
    fn quarter_circle() {
        let s = vehicle_step(&VehicleState::default(), &ControlCommand::new(FRAC_PI_2, FRAC_PI_2), 1.0, &lim()).unwrap();
        assert!((s.pose.x - 1.0).abs() < 1e-12);
        assert!((s.pose.y - 1.0).abs() < 1e-12);
        assert!((s.pose.theta - FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn tiny_turn_rate_matches_series() {
        let st = VehicleState { pose: Pose2D::new(0.3, -0.2, 0.7), ..Default::default() };
        let w = 1e-12;
        let s = vehicle_step(&st, &ControlCommand::new(1.0, w), 0.5, &lim()).unwrap();
        // Second-order expansion of the arc update in ω.
        let (v, dt, th) = (1.0, 0.5, 0.7f64);
        let ex = 0.3 + v * dt * th.cos() - 0.5 * v * w * dt * dt * th.sin();
        let ey = -0.2 + v * dt * th.sin() + 0.5 * v * w * dt * dt * th.cos();
        assert!((s.pose.x - ex).abs() < 1e-9 && (s.pose.y - ey).abs() < 1e-9);
    }

    #[test]
    fn limit_violation() {
        let r = vehicle_step(&VehicleState::default(), &ControlCommand::new(5.0, 0.0), 0.1, &lim());
        assert!(matches!(r, Err(ControlError::LimitViolation { .. })));
        assert!(vehicle_step(&VehicleState::default(), &ControlCommand::ZERO, 0.0, &lim()).is_err());
    }
}
