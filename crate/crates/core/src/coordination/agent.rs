//! Vehicle side of a parking session.

use log::info;
use thiserror::Error;

use super::transport::{Transport, TransportError};
use super::{ErrorCode, MetricsSummary, SessionMessage, SessionPhase, StateSummary};
use crate::bench::{evaluate, terminal_errors, MethodConfig};
use crate::control::{track, LogRow, Plant, SimPlant, TrajectoryLog};
use crate::geometry::Pose2D;
use crate::planner::{Phase, ReferenceTrajectory};
use crate::world::LotScenario;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("server rejected the request ({code:?}): {detail}")]
    Rejected { code: ErrorCode, detail: String },
    #[error("unexpected `{0}` from server")]
    Unexpected(&'static str),
    #[error("vehicle setup: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub vehicle_id: String,
    pub method: MethodConfig,
    pub seed: u64,
    /// Seconds between pose reports.
    pub report_period: f64,
}

impl AgentConfig {
    pub fn new(vehicle_id: impl Into<String>, method: MethodConfig, seed: u64) -> Self {
        Self { vehicle_id: vehicle_id.into(), method, seed, report_period: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub session_id: u64,
    pub slot_id: String,
    pub trajectory: ReferenceTrajectory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub vehicle_id: String,
    pub session_id: u64,
    pub slot_id: String,
    pub phase: SessionPhase,
    pub final_pose: Pose2D,
    pub metrics: Option<MetricsSummary>,
    pub reports_sent: usize,
    pub log: TrajectoryLog,
    /// Set when the run was cut short.
    pub error: Option<String>,
}

fn expect_reply<T: Transport>(t: &mut T) -> Result<SessionMessage, AgentError> {
    match t.recv()? {
        SessionMessage::Error { code, detail } => Err(AgentError::Rejected { code, detail }),
        m => Ok(m),
    }
}

pub struct VehicleAgent<'a> {
    cfg: AgentConfig,
    scenario: &'a LotScenario,
    plant: SimPlant<'a>,
}

impl<'a> VehicleAgent<'a> {
    /// Places the vehicle at the scenario entry pose.
    pub fn new(scenario: &'a LotScenario, cfg: AgentConfig) -> Result<Self, AgentError> {
        let v = cfg.method.variant;
        let plant = SimPlant::new(
            scenario,
            scenario.entry_pose,
            cfg.seed,
            v.estimator(),
            v.localizer_config(),
            cfg.method.limits,
            cfg.method.jump,
        )
        .map_err(|e| AgentError::Setup(e.to_string()))?;
        Ok(Self { cfg, scenario, plant })
    }

    /// Registers and asks for a slot from the current fused pose.
    pub fn request<T: Transport>(&mut self, t: &mut T) -> Result<Assignment, AgentError> {
        t.send(&SessionMessage::Register { vehicle_id: self.cfg.vehicle_id.clone() })?;
        let session_id = match expect_reply(t)? {
            SessionMessage::RegisterAck { session_id } => session_id,
            m => return Err(AgentError::Unexpected(m.type_name())),
        };
        let pose = self.plant.estimate().pose;
        t.send(&SessionMessage::ParkRequest { session_id, pose })?;
        match expect_reply(t)? {
            SessionMessage::SlotAssignment { session_id: sid, slot_id, trajectory } if sid == session_id => {
                info!("{} assigned {slot_id}", self.cfg.vehicle_id);
                Ok(Assignment { session_id, slot_id, trajectory })
            }
            m => Err(AgentError::Unexpected(m.type_name())),
        }
    }

    /// Tracks the assigned trajectory, reporting along the way, and ends the
    /// session with a completion or a failure status.
    pub fn drive<T: Transport>(mut self, t: &mut T, assignment: Assignment) -> AgentRun {
        let Assignment { session_id, slot_id, trajectory } = assignment;
        let mut run = AgentRun {
            vehicle_id: self.cfg.vehicle_id.clone(),
            session_id,
            slot_id,
            phase: SessionPhase::Failed,
            final_pose: self.plant.true_pose(),
            metrics: None,
            reports_sent: 0,
            log: TrajectoryLog::default(),
            error: None,
        };
        if let Err(e) = t.send(&SessionMessage::StatusUpdate { session_id, phase: SessionPhase::Driving }) {
            run.error = Some(e.to_string());
            return run;
        }

        let period = self.cfg.report_period;
        let mut next_report = 0.0;
        let mut parking = false;
        let mut lost: Option<TransportError> = None;
        let mut reports = 0;
        let mut observer = |row: &LogRow| {
            if lost.is_some() {
                return;
            }
            let mut out = Vec::new();
            if row.t + 1e-9 >= next_report {
                out.push(SessionMessage::PoseReport {
                    session_id,
                    state: StateSummary { pose: row.est_pose, gated: row.gated },
                    t: row.t,
                });
                next_report += period;
                reports += 1;
            }
            if !parking && trajectory.sample_at(row.t).phase == Phase::Park {
                parking = true;
                out.push(SessionMessage::StatusUpdate { session_id, phase: SessionPhase::Parking });
            }
            for m in &out {
                if let Err(e) = t.send(m) {
                    lost = Some(e);
                    return;
                }
            }
        };
        let outcome = track(&trajectory, &mut self.plant, &self.cfg.method.track_config(), Some(&mut observer));
        run.reports_sent = reports;
        run.final_pose = self.plant.true_pose();

        let mut outcome = match outcome {
            Ok(o) => o,
            Err(e) => {
                run.error = Some(format!("tracking: {e}"));
                let _ = t.send(&SessionMessage::StatusUpdate { session_id, phase: SessionPhase::Failed });
                return run;
            }
        };
        run.log = std::mem::take(&mut outcome.log);
        if let Some(e) = lost {
            run.error = Some(format!("transport lost: {e}"));
            return run;
        }
        let summary = outcome.succeeded().then(|| evaluate(&run.log, &trajectory).ok()).flatten();
        let msg = match summary {
            Some((max, mean, dtw)) => {
                let (lat, head) = terminal_errors(outcome.final_true_pose, trajectory.terminal());
                let metrics = MetricsSummary {
                    euclidean_max: max,
                    euclidean_mean: mean,
                    dtw_normalized_mean: dtw,
                    terminal_lateral_error: lat,
                    terminal_heading_error: head,
                    elapsed: outcome.elapsed,
                };
                run.metrics = Some(metrics);
                run.phase = SessionPhase::Done;
                SessionMessage::Completion { session_id, pose: outcome.final_true_pose, metrics }
            }
            None => {
                run.error = Some(format!("tracking ended with {:?}", outcome.status));
                SessionMessage::StatusUpdate { session_id, phase: SessionPhase::Failed }
            }
        };
        if let Err(e) = t.send(&msg) {
            run.phase = SessionPhase::Failed;
            run.error = Some(format!("transport lost: {e}"));
        }
        info!("{} finished: {:?}", run.vehicle_id, run.phase);
        run
    }

    pub fn scenario(&self) -> &LotScenario {
        self.scenario
    }
}

/// Full session: register, request, drive, report.
pub fn vehicle_agent<T: Transport>(scenario: &LotScenario, cfg: AgentConfig, transport: &mut T) -> Result<AgentRun, AgentError> {
    let mut agent = VehicleAgent::new(scenario, cfg)?;
    let assignment = agent.request(transport)?;
    Ok(agent.drive(transport, assignment))
}
