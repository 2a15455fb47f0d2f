//! Remote chat-completion backend. The model is an untrusted proposer: its
//! reply must parse and pass the same checks as the heuristic result, or the
//! heuristic answer is returned instead.

use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{heuristic_guidance, validate_result, Backend, GuidanceError, GuidanceResult, GuidanceWeights, PlanningContext};
use crate::geometry::Point2;
use crate::world::OccupancyGrid;

/// Colliding waypoints move to a candidate node at most this far away, meters.
pub const SNAP_RADIUS: f64 = 2.0;

pub const SYSTEM_PROMPT: &str = "You are the parking-lot server's guidance module. \
The user message is a JSON planning context with lot bounds, obstacle polygons, candidate nodes, \
parking slots (id, center, heading, length, width, occupied), UWB anchors and the vehicle pose. \
Choose one unoccupied slot, preferring good anchor coverage and runs of free neighbouring slots, \
and list up to 12 key waypoints from the vehicle to the slot entry, ending within 5 m of it. \
Waypoints must lie inside the bounds and away from obstacles; prefer candidate nodes. \
Reply with exactly one JSON object and nothing else: \
{\"slot_id\": <string>, \"waypoints\": [[x, y], ...], \"reason\": <string>}";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub url: String,
    pub key: Option<String>,
    pub model: String,
    pub timeout: Duration,
}

impl LlmEndpoint {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(20);

    pub fn new(url: impl Into<String>) -> Self {
        Self { url: url.into(), key: None, model: "llama-3.3-70b".into(), timeout: Self::DEFAULT_TIMEOUT }
    }

    /// Reads `UPARK_LLM_URL`, `UPARK_LLM_KEY` and `UPARK_LLM_MODEL`; `None`
    /// without a URL.
    pub fn from_env() -> Option<Self> {
        let url = std::env::var("UPARK_LLM_URL").ok().filter(|u| !u.is_empty())?;
        let mut ep = Self::new(url);
        ep.key = std::env::var("UPARK_LLM_KEY").ok().filter(|k| !k.is_empty());
        if let Ok(model) = std::env::var("UPARK_LLM_MODEL") {
            if !model.is_empty() {
                ep.model = model;
            }
        }
        Some(ep)
    }

    pub fn request_body(&self, ctx: &PlanningContext) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": SYSTEM_PROMPT},
                {"role": "user", "content": ctx.to_json()},
            ],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmReply {
    pub slot_id: String,
    pub waypoints: Vec<[f64; 2]>,
    #[serde(default)]
    pub reason: String,
}

/// First balanced `{…}` block in `text`, respecting JSON string literals.
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, ch) in text[start..].char_indices() {
        if in_str {
            match ch {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match ch {
            '"' => in_str = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

pub fn parse_reply(content: &str) -> Result<LlmReply, String> {
    let block = extract_json_object(content).ok_or("reply has no JSON object")?;
    serde_json::from_str(block).map_err(|e| format!("reply does not match the schema: {e}"))
}

fn call(endpoint: &LlmEndpoint, ctx: &PlanningContext) -> Result<String, String> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(endpoint.timeout))
        .build()
        .into();
    let mut req = agent.post(&endpoint.url).header("Content-Type", "application/json");
    if let Some(key) = &endpoint.key {
        req = req.header("Authorization", format!("Bearer {key}"));
    }
    let mut resp = req
        .send_json(endpoint.request_body(ctx))
        .map_err(|e| format!("transport: {e}"))?;
    let body: Value = resp.body_mut().read_json().map_err(|e| format!("response body: {e}"))?;
    if let Some(content) = body.pointer("/choices/0/message/content").and_then(Value::as_str) {
        return Ok(content.to_string());
    }
    if body.get("slot_id").is_some() {
        return Ok(body.to_string());
    }
    Err("response has no message content".into())
}

/// Moves colliding waypoints onto the nearest candidate node within
/// [`SNAP_RADIUS`]; free waypoints are kept as given.
fn snap(ctx: &PlanningContext, grid: &OccupancyGrid, waypoints: &[[f64; 2]]) -> Vec<Point2> {
    waypoints
        .iter()
        .map(|&[x, y]| {
            let p = Point2::new(x, y);
            if !p.is_finite() || grid.is_free_point(p) {
                return p;
            }
            ctx.candidate_nodes
                .iter()
                .copied()
                .filter(|n| n.distance(p) <= SNAP_RADIUS)
                .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
                .unwrap_or(p)
        })
        .collect()
}

fn propose(ctx: &PlanningContext, grid: &OccupancyGrid, endpoint: &LlmEndpoint) -> Result<GuidanceResult, String> {
    let content = call(endpoint, ctx)?;
    let reply = parse_reply(&content)?;
    let result = GuidanceResult {
        waypoints: snap(ctx, grid, &reply.waypoints),
        slot_id: reply.slot_id,
        backend: Backend::Llm,
        rationale: reply.reason,
        fallback_reason: None,
    };
    validate_result(ctx, grid, &result)?;
    Ok(result)
}

/// One temperature-0 request; any failure yields the heuristic result
/// tagged `llm-fallback` with the reason recorded.
pub fn llm_guidance(
    ctx: &PlanningContext,
    grid: &OccupancyGrid,
    endpoint: Option<&LlmEndpoint>,
    weights: &GuidanceWeights,
) -> Result<GuidanceResult, GuidanceError> {
    let reason = match endpoint {
        None => "no endpoint configured".to_string(),
        Some(ep) => match propose(ctx, grid, ep) {
            Ok(r) => return Ok(r),
            Err(e) => e,
        },
    };
    warn!("llm guidance failed ({reason}); using heuristic");
    let mut r = heuristic_guidance(ctx, grid, weights)?;
    r.backend = Backend::LlmFallback;
    r.fallback_reason = Some(reason);
    Ok(r)
}
