//! Slot registry and the server's transition function.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ErrorCode, MetricsSummary, SessionMessage, SessionPhase};
use crate::bench::planning_grid;
use crate::geometry::Pose2D;
use crate::guidance::{build_context, guide, Backend, GuidanceError, GuidanceWeights, LlmEndpoint};
use crate::planner::{plan_route, PlannerConfig};
use crate::world::{extract_candidate_nodes, LotScenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionState {
    Registered,
    Requested,
    Assigned,
    Driving,
    Parking,
    Done,
    Failed,
}

impl SessionState {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Done | Self::Failed)
    }

    /// States in which the session's slot is reserved.
    pub fn holds_slot(self) -> bool {
        matches!(self, Self::Assigned | Self::Driving | Self::Parking | Self::Done)
    }

    pub fn can_become(self, next: Self) -> bool {
        use SessionState::*;
        match (self, next) {
            (Registered, Requested) | (Requested, Assigned) | (Assigned, Driving) | (Driving, Parking) => true,
            (Driving | Parking, Done) => true,
            (s, Failed) => !s.is_terminal(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub vehicle_id: String,
    pub state: SessionState,
    pub slot_id: Option<String>,
    /// Server clock when the slot was reserved.
    pub reserved_at: Option<u64>,
    pub backend: Option<Backend>,
    pub final_pose: Option<Pose2D>,
    pub metrics: Option<MetricsSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerConfig {
    pub guidance: Backend,
    pub llm: Option<LlmEndpoint>,
    pub planner: PlannerConfig,
    pub weights: GuidanceWeights,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            guidance: Backend::Heuristic,
            llm: None,
            planner: PlannerConfig::default(),
            weights: GuidanceWeights::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub scenario: LotScenario,
    pub sessions: BTreeMap<u64, Session>,
    pub next_session: u64,
    /// Number of accepted transitions.
    pub clock: u64,
}

impl ServerState {
    pub fn new(scenario: LotScenario) -> Self {
        Self { scenario, sessions: BTreeMap::new(), next_session: 1, clock: 0 }
    }

    pub fn occupied_count(&self) -> usize {
        self.scenario.slots.iter().filter(|s| s.occupied).count()
    }

    pub fn terminal_count(&self) -> usize {
        self.sessions.values().filter(|s| s.state.is_terminal()).count()
    }

    fn set_occupied(&mut self, slot_id: &str, occupied: bool) {
        if let Some(slot) = self.scenario.slots.iter_mut().find(|s| s.id == slot_id) {
            slot.occupied = occupied;
        }
    }

    fn fail_session(&mut self, id: u64) {
        let Some(s) = self.sessions.get_mut(&id) else { return };
        s.state = SessionState::Failed;
        if let Some(slot) = s.slot_id.clone() {
            self.set_occupied(&slot, false);
        }
    }
}

type Reply = Result<Vec<SessionMessage>, SessionMessage>;

fn session(state: &ServerState, id: u64) -> Result<&Session, SessionMessage> {
    state
        .sessions
        .get(&id)
        .ok_or_else(|| SessionMessage::error(ErrorCode::UnknownSession, format!("no session {id}")))
}

fn transition(state: &mut ServerState, id: u64, next: SessionState) -> Result<(), SessionMessage> {
    let cur = session(state, id)?.state;
    if !cur.can_become(next) {
        return Err(SessionMessage::error(
            ErrorCode::IllegalTransition,
            format!("session {id}: {cur:?} -> {next:?}"),
        ));
    }
    state.sessions.get_mut(&id).expect("checked above").state = next;
    Ok(())
}

fn assign(state: &mut ServerState, cfg: &ServerConfig, id: u64, pose: Pose2D) -> Reply {
    transition(state, id, SessionState::Requested)?;
    let scenario = &state.scenario;
    let grid = planning_grid(scenario);
    let nodes = extract_candidate_nodes(&grid, scenario);
    let ctx = build_context(scenario, &nodes, pose, state.clock as f64);
    let g = guide(&ctx, &grid, cfg.guidance, cfg.llm.as_ref(), &cfg.weights).map_err(|e| match e {
        GuidanceError::NoFreeSlot => SessionMessage::error(ErrorCode::NoFreeSlot, "no free slot"),
        e => SessionMessage::error(ErrorCode::PlanningFailed, e.to_string()),
    })?;
    let route = plan_route(scenario, &grid, pose, &g.slot_id, &g.waypoints, &cfg.planner)
        .map_err(|e| SessionMessage::error(ErrorCode::PlanningFailed, format!("slot {}: {e}", g.slot_id)))?;
    transition(state, id, SessionState::Assigned)?;
    state.set_occupied(&route.slot_id, true);
    let clock = state.clock;
    let s = state.sessions.get_mut(&id).expect("session exists");
    s.slot_id = Some(route.slot_id.clone());
    s.reserved_at = Some(clock);
    s.backend = Some(g.backend);
    Ok(vec![SessionMessage::SlotAssignment { session_id: id, slot_id: route.slot_id, trajectory: route.trajectory }])
}

fn apply(state: &mut ServerState, cfg: &ServerConfig, msg: &SessionMessage) -> Reply {
    use SessionMessage as M;
    match msg {
        M::Register { vehicle_id } => {
            let id = state.next_session;
            state.next_session += 1;
            state.sessions.insert(
                id,
                Session {
                    vehicle_id: vehicle_id.clone(),
                    state: SessionState::Registered,
                    slot_id: None,
                    reserved_at: None,
                    backend: None,
                    final_pose: None,
                    metrics: None,
                },
            );
            Ok(vec![M::RegisterAck { session_id: id }])
        }
        M::ParkRequest { session_id, pose } => assign(state, cfg, *session_id, *pose),
        M::PoseReport { session_id, .. } => {
            let s = session(state, *session_id)?;
            if !matches!(s.state, SessionState::Assigned | SessionState::Driving | SessionState::Parking) {
                return Err(SessionMessage::error(
                    ErrorCode::IllegalTransition,
                    format!("session {session_id}: pose report while {:?}", s.state),
                ));
            }
            Ok(vec![])
        }
        M::StatusUpdate { session_id, phase } => {
            let next = match phase {
                SessionPhase::Driving => SessionState::Driving,
                SessionPhase::Parking => SessionState::Parking,
                SessionPhase::Failed => SessionState::Failed,
                SessionPhase::Done => {
                    return Err(SessionMessage::error(
                        ErrorCode::IllegalTransition,
                        "sessions finish with a completion message",
                    ))
                }
            };
            transition(state, *session_id, next)?;
            if next == SessionState::Failed {
                state.fail_session(*session_id);
            }
            Ok(vec![])
        }
        M::Completion { session_id, pose, metrics } => {
            transition(state, *session_id, SessionState::Done)?;
            let s = state.sessions.get_mut(session_id).expect("session exists");
            s.final_pose = Some(*pose);
            s.metrics = Some(*metrics);
            Ok(vec![])
        }
        M::RegisterAck { .. } | M::SlotAssignment { .. } | M::Error { .. } => Err(SessionMessage::error(
            ErrorCode::Protocol,
            format!("server does not accept `{}`", msg.type_name()),
        )),
    }
}

/// Pure transition: the new registry and the replies for the sender. A
/// rejected message leaves the state untouched and yields one `Error`.
pub fn server_handle(state: &ServerState, cfg: &ServerConfig, msg: &SessionMessage) -> (ServerState, Vec<SessionMessage>) {
    let mut next = state.clone();
    match apply(&mut next, cfg, msg) {
        Ok(replies) => {
            next.clock += 1;
            (next, replies)
        }
        Err(e) => (state.clone(), vec![e]),
    }
}

/// Connection loss: a session that has not finished fails and frees its slot.
pub fn server_disconnect(state: &ServerState, session_id: u64) -> ServerState {
    let mut next = state.clone();
    if next.sessions.get(&session_id).is_some_and(|s| !s.state.is_terminal()) {
        next.fail_session(session_id);
        next.clock += 1;
    }
    next
}
