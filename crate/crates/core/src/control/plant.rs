//! Simulated vehicle: true kinematics, sensor streams and an on-board
//! estimator behind the [`Plant`] interface.

use serde::{Deserialize, Serialize};

use super::vehicle::{vehicle_step, ControlCommand, VehicleLimits, VehicleState};
use super::ControlError;
use crate::geometry::{Point2, Pose2D};
use crate::localization::{Localizer, LocalizerConfig, RawUwbTracker, SensorEvent};
use crate::sensor::{RangingSample, SensorSim};
use crate::world::LotScenario;

/// IMU sample period, seconds.
pub const IMU_PERIOD: f64 = 0.02;
/// Ranging epochs arrive every this many IMU samples.
pub const IMU_PER_RANGING: u64 = 5;
/// Sensor-stream digest snapshot point, in IMU ticks (5 s).
pub const STREAM_PREFIX_TICKS: u64 = 250;

/// Latest pose estimate handed to the controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub pose: Pose2D,
    /// A measurement update happened since the previous read.
    pub updated: bool,
    /// The most recent update was down-weighted by the innovation gate.
    pub gated: bool,
    pub timestamp: f64,
}

/// What the control loop needs from a vehicle, simulated or real.
pub trait Plant {
    fn time(&self) -> f64;
    /// Ground truth when known (used for logging only).
    fn true_pose(&self) -> Pose2D;
    /// Latest-value read: repeated reads without new data return the same pose.
    fn estimate(&mut self) -> Estimate;
    fn apply(&mut self, cmd: ControlCommand, dt: f64) -> Result<(), ControlError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    /// Three-layer fusion.
    Fused,
    /// Smoothed multilateration fixes only; heading from displacement.
    RawUwb,
}

/// Scripted offset added to layer-2 fixes during a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpInjection {
    pub start: f64,
    pub duration: f64,
    pub offset: Point2,
}

#[derive(Debug, Clone)]
pub struct SimPlant<'a> {
    scenario: &'a LotScenario,
    limits: VehicleLimits,
    truth: VehicleState,
    sensors: SensorSim,
    localizer: Localizer,
    raw: Option<RawUwbTracker>,
    jump: Option<JumpInjection>,
    tick: u64,
    updated: bool,
    prefix_digest: Option<u64>,
    reversing: bool,
}

impl<'a> SimPlant<'a> {
    pub fn new(
        scenario: &'a LotScenario,
        start: Pose2D,
        seed: u64,
        kind: EstimatorKind,
        localizer: LocalizerConfig,
        limits: VehicleLimits,
        jump: Option<JumpInjection>,
    ) -> Result<Self, ControlError> {
        let mut plant = Self {
            scenario,
            limits,
            truth: VehicleState::at_rest(start, 0.0),
            sensors: SensorSim::new(seed),
            localizer: Localizer::new(localizer, scenario, start, 0.0),
            raw: matches!(kind, EstimatorKind::RawUwb).then(|| RawUwbTracker::new(start)),
            jump,
            tick: 0,
            updated: false,
            prefix_digest: None,
            reversing: false,
        };
        let samples = plant.sensors.sample_ranging(scenario, start.position(), 0.0);
        plant.ingest_ranging(samples, 0.0)?;
        Ok(plant)
    }

    pub fn localizer(&self) -> &Localizer {
        &self.localizer
    }

    pub fn stream_digest(&self) -> u64 {
        self.sensors.stream_digest()
    }

    /// Digest of the noise variates drawn in the first [`STREAM_PREFIX_TICKS`]
    /// ticks. The draw count per tick is fixed, so runs sharing a seed agree
    /// here whatever the vehicle does.
    pub fn stream_prefix_digest(&self) -> Option<u64> {
        self.prefix_digest
    }

    pub fn truth(&self) -> &VehicleState {
        &self.truth
    }

    fn ingest_ranging(&mut self, samples: Vec<RangingSample>, t: f64) -> Result<(), ControlError> {
        let offset = self
            .jump
            .filter(|j| t >= j.start && t < j.start + j.duration)
            .map(|j| j.offset);
        self.localizer.set_fix_offset(offset);
        for s in samples {
            self.localizer.feed(SensorEvent::Ranging(s))?;
        }
        if let Some(fix) = self.localizer.flush()? {
            self.updated = true;
            if let Some(raw) = self.raw.as_mut() {
                raw.update(&fix, self.reversing);
            }
        }
        Ok(())
    }
}

impl Plant for SimPlant<'_> {
    fn time(&self) -> f64 {
        self.truth.timestamp
    }

    fn true_pose(&self) -> Pose2D {
        self.truth.pose
    }

    fn estimate(&mut self) -> Estimate {
        let updated = std::mem::take(&mut self.updated);
        let state = self.localizer.state();
        let pose = match &self.raw {
            Some(raw) => raw.pose().unwrap_or(state.pose()),
            None => state.pose(),
        };
        Estimate {
            pose,
            updated,
            gated: self.raw.is_none() && state.gated,
            timestamp: state.timestamp,
        }
    }

    fn apply(&mut self, cmd: ControlCommand, dt: f64) -> Result<(), ControlError> {
        let substeps = ((dt / IMU_PERIOD).round() as u64).max(1);
        let h = dt / substeps as f64;
        if cmd.v != 0.0 {
            self.reversing = cmd.v < 0.0;
        }
        for _ in 0..substeps {
            self.truth = vehicle_step(&self.truth, &cmd, h, &self.limits)?;
            self.tick += 1;
            // Tick count, not summed steps, so epochs land on exact multiples.
            self.truth.timestamp = self.tick as f64 * h;
            let t = self.truth.timestamp;
            let ranging = (self.tick % IMU_PER_RANGING == 0)
                .then(|| self.sensors.sample_ranging(self.scenario, self.truth.pose.position(), t));
            let imu = self.sensors.sample_imu(&self.scenario.noise, &self.truth, t);
            self.localizer.feed(SensorEvent::Imu(imu))?;
            if self.tick == STREAM_PREFIX_TICKS {
                self.prefix_digest = Some(self.sensors.stream_digest());
            }
            if let Some(samples) = ranging {
                self.ingest_ranging(samples, t)?;
            }
        }
        Ok(())
    }
}
