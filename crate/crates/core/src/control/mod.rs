//! Unicycle kinematics, reliability-adaptive MPC and closed-loop tracking.

mod mpc;
mod plant;
mod track;
mod vehicle;

use thiserror::Error;

pub use mpc::{adapt_weights, mpc_cost, mpc_solve, project, rollout, MpcConfig, MpcController, MpcSolution, MpcWeights};
pub use plant::{Estimate, EstimatorKind, JumpInjection, Plant, SimPlant, IMU_PER_RANGING, IMU_PERIOD, STREAM_PREFIX_TICKS};
pub use track::{track, LogRow, TrackConfig, TrackOutcome, TrackStatus, TrajectoryLog};
pub use vehicle::{vehicle_step, ControlCommand, VehicleLimits, VehicleState};

use crate::localization::LocalizationError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("command (v={v}, omega={omega}) outside actuator limits")]
    LimitViolation { v: f64, omega: f64 },
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("invalid controller configuration")]
    InvalidConfig,
    #[error("trajectory has no samples")]
    EmptyTrajectory,
    #[error(transparent)]
    Localization(#[from] LocalizationError),
}
