//! End-to-end route: guided grid search to a staging pose in the aisle,
//! smoothing, and the parking maneuver, time-parameterized.

use serde::{Deserialize, Serialize};

use super::astar::{astar, guided_astar, GridPath};
use super::maneuver::{parking_maneuver_with, ParkDirection, ParkingManeuver, PREFERRED_RADIUS};
use super::profile::{time_parameterize, ProfileLimits, ReferenceTrajectory};
use super::smooth::{smooth_polyline, SmoothPath};
use super::PlanError;
use crate::geometry::{Point2, Pose2D};
use crate::world::{LotScenario, OccupancyGrid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub r_min: f64,
    pub limits: ProfileLimits,
    pub direction: ParkDirection,
    /// Clearance added to the turning radius when placing the staging pose, meters.
    pub staging_margin: f64,
    /// Straight run along the aisle before the staging pose, meters.
    pub staging_run: f64,
    /// Guidance waypoints closer than this to the slot entry are ignored, meters.
    pub goal_exclusion: f64,
    /// Straight run along the start heading kept ahead of the search, meters.
    pub head_run: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            r_min: 1.0,
            limits: ProfileLimits::default(),
            direction: ParkDirection::HeadIn,
            staging_margin: 0.5,
            staging_run: 2.0,
            goal_exclusion: 4.0,
            head_run: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanStats {
    pub guided_cost: f64,
    pub guided_expanded: usize,
    pub plain_cost: f64,
    pub plain_expanded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedRoute {
    pub slot_id: String,
    pub grid_path: GridPath,
    pub smooth_path: SmoothPath,
    pub maneuver: ParkingManeuver,
    pub trajectory: ReferenceTrajectory,
    pub stats: PlanStats,
}

impl PlannedRoute {
    pub fn length(&self) -> f64 {
        self.smooth_path.length() + self.maneuver.length()
    }
}

/// Plans from `start` into `slot_id`, trying a staging pose on either side of
/// the slot and keeping the shorter feasible result.
pub fn plan_route(
    scenario: &LotScenario,
    grid: &OccupancyGrid,
    start: Pose2D,
    slot_id: &str,
    waypoints: &[Point2],
    cfg: &PlannerConfig,
) -> Result<PlannedRoute, PlanError> {
    let slot = scenario.slot(slot_id).ok_or_else(|| PlanError::UnknownSlot(slot_id.to_string()))?;
    if slot.occupied {
        return Err(PlanError::SlotOccupied(slot_id.to_string()));
    }
    let mut best: Option<PlannedRoute> = None;
    let mut last_err = None;
    for side in [1.0, -1.0] {
        match plan_side(scenario, grid, start, slot_id, waypoints, cfg, side) {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.length() < b.length()) {
                    best = Some(r);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap())
}

fn plan_side(
    scenario: &LotScenario,
    grid: &OccupancyGrid,
    start: Pose2D,
    slot_id: &str,
    waypoints: &[Point2],
    cfg: &PlannerConfig,
    side: f64,
) -> Result<PlannedRoute, PlanError> {
    let slot = scenario.slot(slot_id).unwrap();
    let (u, n) = (slot.axis(), slot.axis().perp());
    let entry = slot.entry_point();
    let reach = cfg.r_min.max(PREFERRED_RADIUS) + cfg.staging_margin;
    let lateral = match cfg.direction {
        ParkDirection::HeadIn => side,
        ParkDirection::BackIn => -side,
    };
    let staging = entry - u * reach + n * (lateral * reach);
    let pre_staging = staging + n * (side * cfg.staging_run);
    if !grid.segment_free(pre_staging, staging) {
        return Err(PlanError::GeometricallyInfeasible("staging run is blocked".into()));
    }

    let p0 = start.position();
    let head = p0 + start.heading() * cfg.head_run;
    let use_head = cfg.head_run > 0.0 && grid.segment_free(p0, head);
    let search_from = if use_head { head } else { p0 };
    let start_cell = grid
        .nearest_free(search_from, 1.0)
        .ok_or(PlanError::BlockedCell(grid.cell_of(search_from)))?;
    let goal_cell = grid.cell_of(pre_staging);
    let kept: Vec<Point2> = waypoints
        .iter()
        .copied()
        .filter(|w| w.distance(entry) > cfg.goal_exclusion)
        .collect();
    let guided = guided_astar(grid, start_cell, goal_cell, &kept)?;
    let plain = astar(grid, start_cell, goal_cell)?;

    let centers = guided.points(grid);
    let mut poly = vec![p0];
    if use_head {
        poly.push(head);
    }
    if centers.len() > 2 {
        poly.extend_from_slice(&centers[1..centers.len() - 1]);
    }
    poly.push(pre_staging);
    poly.push(staging);
    let smooth = smooth_polyline(&poly, grid, usize::from(use_head), 1)?;

    let approach_heading = (n * -side).angle();
    let approach = Pose2D::new(staging.x, staging.y, approach_heading);
    let maneuver = parking_maneuver_with(approach, slot, cfg.r_min, cfg.direction)?;
    if let Some((p, _, _)) = maneuver.sample(0.05).into_iter().find(|(p, _, _)| !grid.is_free_point(*p)) {
        return Err(PlanError::GeometricallyInfeasible(format!(
            "maneuver collides at ({:.2}, {:.2})",
            p.x, p.y
        )));
    }
    let trajectory = time_parameterize(&smooth, Some(&maneuver), &cfg.limits);
    Ok(PlannedRoute {
        slot_id: slot_id.to_string(),
        stats: PlanStats {
            guided_cost: guided.cost,
            guided_expanded: guided.expanded_nodes,
            plain_cost: plain.cost,
            plain_expanded: plain.expanded_nodes,
        },
        grid_path: guided,
        smooth_path: smooth,
        maneuver,
        trajectory,
    })
}
