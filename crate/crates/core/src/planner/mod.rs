//! Grid search, path smoothing, parking maneuvers and reference trajectories.

mod astar;
mod maneuver;
mod profile;
mod route;
mod smooth;

use thiserror::Error;

pub use astar::{astar, guided_astar, path_cost, snap_waypoint, step_cost, successors, GridPath, WAYPOINT_SNAP_RADIUS};
pub use maneuver::{
    parking_maneuver, parking_maneuver_with, Gear, ManeuverSegment, ParkDirection, ParkingManeuver,
    MAX_APPROACH_DISTANCE, PREFERRED_RADIUS,
};
pub use profile::{time_parameterize, Phase, ProfileLimits, RefSample, ReferenceTrajectory};
pub use route::{plan_route, PlanStats, PlannedRoute, PlannerConfig};
pub use smooth::{
    bezier_derivative, bezier_point, corner_chain, interpolating_spline, prune_polyline, resample, smooth,
    smooth_polyline, Bezier, PathSample, SmoothPath, ARM_FRACTION, MAX_ARM, SAMPLE_SPACING,
};

use crate::geometry::Point2;
use crate::world::Cell;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("goal unreachable after {expanded_nodes} expansions")]
    UnreachableGoal { expanded_nodes: usize },
    #[error("start cell ({}, {}) is not free", .0.x, .0.y)]
    BlockedCell(Cell),
    #[error("smoothing infeasible near ({:.2}, {:.2})", at.x, at.y)]
    SmoothingInfeasible { at: Point2 },
    #[error("parking maneuver infeasible: {0}")]
    GeometricallyInfeasible(String),
    #[error("unknown slot {0:?}")]
    UnknownSlot(String),
    #[error("slot {0:?} is occupied")]
    SlotOccupied(String),
    #[error("empty path")]
    EmptyPath,
}
