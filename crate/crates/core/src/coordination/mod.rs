//! Vehicle–server coordination: wire messages and their codec, the server
//! transition function, in-process and TCP transports, and the vehicle agent.

mod agent;
mod codec;
mod server;
mod transport;

use serde::{Deserialize, Serialize};

pub use agent::{vehicle_agent, AgentConfig, AgentError, AgentRun, Assignment, VehicleAgent};
pub use codec::{decode, decode_body, encode, read_frame, read_frame_bytes, write_frame, CodecError, MAX_FRAME_LEN};
pub use server::{
    server_disconnect, server_handle, Session, SessionState, ServerConfig, ServerState,
};
pub use transport::{
    in_process, run_server, spawn_tcp_listener, ConnId, InProcessHub, InProcessTransport, Inbound, Outbox,
    TcpTransport, Transport, TransportError,
};

use crate::geometry::Pose2D;
use crate::planner::ReferenceTrajectory;

pub const DEFAULT_PORT: u16 = 7788;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionPhase {
    Driving,
    Parking,
    Done,
    Failed,
}

/// Fused estimate as reported over the wire.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSummary {
    pub pose: Pose2D,
    pub gated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub euclidean_max: f64,
    pub euclidean_mean: f64,
    pub dtw_normalized_mean: f64,
    pub terminal_lateral_error: f64,
    pub terminal_heading_error: f64,
    pub elapsed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorCode {
    UnknownSession,
    NoFreeSlot,
    PlanningFailed,
    IllegalTransition,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SessionMessage {
    Register { vehicle_id: String },
    RegisterAck { session_id: u64 },
    ParkRequest { session_id: u64, pose: Pose2D },
    SlotAssignment { session_id: u64, slot_id: String, trajectory: ReferenceTrajectory },
    PoseReport { session_id: u64, state: StateSummary, t: f64 },
    StatusUpdate { session_id: u64, phase: SessionPhase },
    Completion { session_id: u64, pose: Pose2D, metrics: MetricsSummary },
    Error { code: ErrorCode, detail: String },
}

impl SessionMessage {
    pub const TYPES: [&'static str; 8] = [
        "register",
        "register_ack",
        "park_request",
        "slot_assignment",
        "pose_report",
        "status_update",
        "completion",
        "error",
    ];

    pub fn type_name(&self) -> &'static str {
        let i = match self {
            Self::Register { .. } => 0,
            Self::RegisterAck { .. } => 1,
            Self::ParkRequest { .. } => 2,
            Self::SlotAssignment { .. } => 3,
            Self::PoseReport { .. } => 4,
            Self::StatusUpdate { .. } => 5,
            Self::Completion { .. } => 6,
            Self::Error { .. } => 7,
        };
        Self::TYPES[i]
    }

    pub fn session_id(&self) -> Option<u64> {
        match *self {
            Self::Register { .. } | Self::Error { .. } => None,
            Self::RegisterAck { session_id }
            | Self::ParkRequest { session_id, .. }
            | Self::SlotAssignment { session_id, .. }
            | Self::PoseReport { session_id, .. }
            | Self::StatusUpdate { session_id, .. }
            | Self::Completion { session_id, .. } => Some(session_id),
        }
    }

    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        Self::Error { code, detail: detail.into() }
    }
}
