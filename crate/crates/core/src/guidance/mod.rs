//! Slot selection and key-waypoint generation: a deterministic heuristic
//! backend and a remote language-model backend that falls back to it.

mod llm;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use llm::{extract_json_object, llm_guidance, parse_reply, LlmEndpoint, LlmReply, SYSTEM_PROMPT};

use crate::geometry::{Point2, Polygon, Pose2D, Rect};
use crate::world::{segment_blocked_by, Anchor, LotScenario, OccupancyGrid};

/// Hard cap on the waypoint list.
pub const MAX_WAYPOINTS: usize = 12;
/// The last waypoint must lie this close to the slot entry, meters.
pub const ENTRY_REACH: f64 = 5.0;
/// Longest visibility-graph edge in the waypoint corridor, meters.
const CORRIDOR_EDGE: f64 = 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GuidanceError {
    #[error("no free slot")]
    NoFreeSlot,
    #[error("gdop needs at least 2 anchors, got {0}")]
    TooFewAnchors(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextSlot {
    pub id: String,
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub occupied: bool,
}

impl ContextSlot {
    pub fn entry_point(&self) -> Point2 {
        self.center - Point2::from_angle(self.heading) * (0.5 * self.length)
    }
}

/// Immutable snapshot of everything a guidance backend may look at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningContext {
    pub bounds: Rect,
    pub obstacles: Vec<Polygon>,
    pub candidate_nodes: Vec<Point2>,
    pub slots: Vec<ContextSlot>,
    pub anchors: Vec<Anchor>,
    pub vehicle_pose: Pose2D,
    pub request_timestamp: f64,
}

impl PlanningContext {
    pub fn slot(&self, id: &str) -> Option<&ContextSlot> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn line_of_sight(&self, a: Point2, b: Point2) -> bool {
        self.obstacles.iter().all(|p| !segment_blocked_by(p, a, b))
    }

    /// Stable JSON rendering (field and list order fixed by construction).
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("context serializes")
    }
}

pub fn build_context(scenario: &LotScenario, nodes: &[Point2], pose: Pose2D, timestamp: f64) -> PlanningContext {
    PlanningContext {
        bounds: scenario.bounds,
        obstacles: scenario.obstacles.clone(),
        candidate_nodes: nodes.to_vec(),
        slots: scenario
            .slots
            .iter()
            .map(|s| ContextSlot {
                id: s.id.clone(),
                center: s.center,
                heading: s.heading,
                length: s.length,
                width: s.width,
                occupied: s.occupied,
            })
            .collect(),
        anchors: scenario.anchors.clone(),
        vehicle_pose: pose,
        request_timestamp: timestamp,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Heuristic,
    Llm,
    LlmFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceResult {
    pub slot_id: String,
    pub waypoints: Vec<Point2>,
    pub backend: Backend,
    pub rationale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GuidanceWeights {
    pub w_c: f64,
    pub w_g: f64,
    pub w_d: f64,
}

impl Default for GuidanceWeights {
    fn default() -> Self {
        Self { w_c: 1.0, w_g: 0.5, w_d: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotScore {
    pub slot_id: String,
    pub coverage_score: f64,
    pub contiguity_score: u32,
    pub distance_score: f64,
    pub total: f64,
}

/// Horizontal dilution of precision at `point`; infinite when the geometry
/// is singular.
pub fn gdop(anchors: &[Point2], point: Point2) -> Result<f64, GuidanceError> {
    if anchors.len() < 2 {
        return Err(GuidanceError::TooFewAnchors(anchors.len()));
    }
    let mut gtg = Matrix2::zeros();
    for &a in anchors {
        let d = a - point;
        let n = d.norm();
        if n < 1e-12 {
            continue;
        }
        let u = nalgebra::Vector2::new(d.x / n, d.y / n);
        gtg += u * u.transpose();
    }
    let eig = gtg.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if lo <= 0.0 || hi / lo > 1e8 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 / eig[0] + 1.0 / eig[1]).sqrt())
}

fn same_row(a: &ContextSlot, b: &ContextSlot) -> bool {
    let axis = Point2::from_angle(a.heading);
    let d = b.center - a.center;
    (crate::geometry::wrap_angle(a.heading - b.heading)).abs() < 1e-6
        && d.dot(axis).abs() < 0.1 * a.length
        && (axis.cross(d).abs() - 0.5 * (a.width + b.width)).abs() < 0.1 * a.width.min(b.width)
}

/// Length of the run of free, side-by-side slots containing `idx`.
pub fn contiguity(slots: &[ContextSlot], idx: usize) -> u32 {
    if slots[idx].occupied {
        return 0;
    }
    let mut seen = vec![false; slots.len()];
    let mut stack = vec![idx];
    seen[idx] = true;
    let mut count = 0;
    while let Some(i) = stack.pop() {
        count += 1;
        for j in 0..slots.len() {
            if !seen[j] && !slots[j].occupied && same_row(&slots[i], &slots[j]) {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    count
}

/// LOS-anchor count plus 1/GDOP over those anchors at the slot entry.
pub fn coverage(ctx: &PlanningContext, point: Point2) -> f64 {
    let visible: Vec<Point2> = ctx
        .anchors
        .iter()
        .map(|a| a.position)
        .filter(|&a| ctx.line_of_sight(a, point))
        .collect();
    let inv = gdop(&visible, point).map(|g| 1.0 / g).unwrap_or(0.0);
    visible.len() as f64 + inv
}

/// Scores every free slot, in slot order.
pub fn score_slots(ctx: &PlanningContext, w: &GuidanceWeights) -> Vec<SlotScore> {
    let pose = ctx.vehicle_pose.position();
    ctx.slots
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.occupied)
        .map(|(i, s)| {
            let entry = s.entry_point();
            let coverage_score = coverage(ctx, entry);
            let contiguity_score = contiguity(&ctx.slots, i);
            let distance_score = pose.distance(entry);
            SlotScore {
                slot_id: s.id.clone(),
                coverage_score,
                contiguity_score,
                distance_score,
                total: w.w_c * coverage_score + w.w_g * contiguity_score as f64 - w.w_d * distance_score,
            }
        })
        .collect()
}

/// Deterministic backend: best-scoring slot and a corridor of candidate
/// nodes leading to its entry.
pub fn heuristic_guidance(
    ctx: &PlanningContext,
    grid: &OccupancyGrid,
    weights: &GuidanceWeights,
) -> Result<GuidanceResult, GuidanceError> {
    let scores = score_slots(ctx, weights);
    let best = scores
        .iter()
        .max_by(|a, b| a.total.total_cmp(&b.total).then_with(|| b.slot_id.cmp(&a.slot_id)))
        .ok_or(GuidanceError::NoFreeSlot)?;
    let slot = ctx.slot(&best.slot_id).unwrap();
    let entry = slot.entry_point();
    let target = if grid.is_free_point(entry) {
        entry
    } else {
        grid.nearest_free(entry, 1.0).map(|c| grid.cell_center(c)).unwrap_or(entry)
    };
    let mut waypoints = corridor(ctx, grid, ctx.vehicle_pose.position(), target);
    waypoints.push(target);
    let rationale = format!(
        "slot {}: coverage {:.3}, contiguity {}, distance {:.2} m, total {:.3} (of {} free)",
        best.slot_id,
        best.coverage_score,
        best.contiguity_score,
        best.distance_score,
        best.total,
        scores.len()
    );
    Ok(GuidanceResult {
        slot_id: best.slot_id.clone(),
        waypoints,
        backend: Backend::Heuristic,
        rationale,
        fallback_reason: None,
    })
}

#[derive(Clone, Copy, PartialEq)]
struct QueueItem(f64, usize);
impl Eq for QueueItem {}
impl PartialOrd for QueueItem {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for QueueItem {
    fn cmp(&self, o: &Self) -> Ordering {
        o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
    }
}

/// Candidate nodes on the shortest visibility-graph route from `from` to
/// `to`, thinned to leave room for the entry point.
fn corridor(ctx: &PlanningContext, grid: &OccupancyGrid, from: Point2, to: Point2) -> Vec<Point2> {
    let mut pts = vec![from];
    pts.extend(ctx.candidate_nodes.iter().copied().filter(|p| grid.is_free_point(*p)));
    pts.push(to);
    let n = pts.len();
    let goal = n - 1;
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    dist[0] = 0.0;
    heap.push(QueueItem(0.0, 0));
    while let Some(QueueItem(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        if i == goal {
            break;
        }
        for j in 0..n {
            let len = pts[i].distance(pts[j]);
            if j == i || len > CORRIDOR_EDGE || d + len >= dist[j] || !grid.segment_free(pts[i], pts[j]) {
                continue;
            }
            dist[j] = d + len;
            parent[j] = i;
            heap.push(QueueItem(dist[j], j));
        }
    }
    if parent[goal] == usize::MAX {
        return Vec::new();
    }
    let mut route = Vec::new();
    let mut cur = parent[goal];
    while cur != 0 {
        route.push(pts[cur]);
        cur = parent[cur];
    }
    route.reverse();
    let cap = MAX_WAYPOINTS - 1;
    if route.len() > cap {
        let m = route.len();
        route = (0..cap).map(|k| route[(k + 1) * m / cap - 1]).collect();
    }
    route
}

/// Checks every result invariant against the context.
pub fn validate_result(ctx: &PlanningContext, grid: &OccupancyGrid, r: &GuidanceResult) -> Result<(), String> {
    let slot = ctx.slot(&r.slot_id).ok_or_else(|| format!("unknown slot {:?}", r.slot_id))?;
    if slot.occupied {
        return Err(format!("slot {} is occupied", r.slot_id));
    }
    if r.waypoints.is_empty() || r.waypoints.len() > MAX_WAYPOINTS {
        return Err(format!("waypoint count {} outside 1..={MAX_WAYPOINTS}", r.waypoints.len()));
    }
    for w in &r.waypoints {
        if !w.is_finite() || !ctx.bounds.contains(*w) {
            return Err(format!("waypoint ({}, {}) outside the lot", w.x, w.y));
        }
        if !grid.is_free_point(*w) {
            return Err(format!("waypoint ({:.2}, {:.2}) collides", w.x, w.y));
        }
    }
    let last = *r.waypoints.last().unwrap();
    if last.distance(slot.entry_point()) > ENTRY_REACH {
        return Err(format!("last waypoint is {:.2} m from the slot entry", last.distance(slot.entry_point())));
    }
    Ok(())
}

/// Runs the requested backend. `Llm` and `LlmFallback` both mean "ask the
/// model, fall back on failure".
pub fn guide(
    ctx: &PlanningContext,
    grid: &OccupancyGrid,
    backend: Backend,
    endpoint: Option<&LlmEndpoint>,
    weights: &GuidanceWeights,
) -> Result<GuidanceResult, GuidanceError> {
    match backend {
        Backend::Heuristic => heuristic_guidance(ctx, grid, weights),
        Backend::Llm | Backend::LlmFallback => llm_guidance(ctx, grid, endpoint, weights),
    }
}
