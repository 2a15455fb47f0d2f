//! Arc–line parking maneuver into a slot.

use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::geometry::{wrap_angle, Point2, Pose2D};
use crate::world::ParkingSlot;

/// Turning radius used when the minimum allows a tighter one, meters.
pub const PREFERRED_RADIUS: f64 = 1.0;
/// Maximum distance between the approach pose and the slot entry, meters.
pub const MAX_APPROACH_DISTANCE: f64 = 8.0;
const ALIGN_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gear {
    Forward,
    Reverse,
}

impl Gear {
    pub fn sign(self) -> f64 {
        match self {
            Gear::Forward => 1.0,
            Gear::Reverse => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Gear::Forward => "forward",
            Gear::Reverse => "reverse",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParkDirection {
    #[default]
    HeadIn,
    BackIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ManeuverSegment {
    Arc {
        center: Point2,
        radius: f64,
        /// Angle of the radius vector at the start, radians.
        start_angle: f64,
        end_angle: f64,
        /// +1 counter-clockwise, −1 clockwise.
        direction: f64,
    },
    Line {
        start: Point2,
        end: Point2,
    },
}

impl ManeuverSegment {
    pub fn length(&self) -> f64 {
        match *self {
            ManeuverSegment::Arc { radius, start_angle, end_angle, direction, .. } => {
                radius * sweep(start_angle, end_angle, direction)
            }
            ManeuverSegment::Line { start, end } => start.distance(end),
        }
    }

    /// Point and direction of motion at arc length `s` from the segment start.
    pub fn eval(&self, s: f64) -> (Point2, f64) {
        match *self {
            ManeuverSegment::Arc { center, radius, start_angle, direction, .. } => {
                let a = start_angle + direction * s / radius;
                (center + Point2::from_angle(a) * radius, wrap_angle(a + direction * std::f64::consts::FRAC_PI_2))
            }
            ManeuverSegment::Line { start, end } => {
                let len = start.distance(end);
                let t = if len > 0.0 { s / len } else { 0.0 };
                (start.lerp(end, t), (end - start).angle())
            }
        }
    }

    pub fn start_heading(&self) -> f64 {
        self.eval(0.0).1
    }

    pub fn end_heading(&self) -> f64 {
        self.eval(self.length()).1
    }
}

/// Swept angle from `a` to `b` turning in `direction`, in [0, 2π).
fn sweep(a: f64, b: f64, direction: f64) -> f64 {
    (direction * (b - a)).rem_euclid(std::f64::consts::TAU)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParkingManeuver {
    pub segments: Vec<ManeuverSegment>,
    pub gears: Vec<Gear>,
    pub terminal: Pose2D,
    pub direction: ParkDirection,
}

impl ParkingManeuver {
    pub fn length(&self) -> f64 {
        self.segments.iter().map(ManeuverSegment::length).sum()
    }

    /// `(point, motion heading, gear)` samples at roughly `spacing`, segment
    /// endpoints included once.
    pub fn sample(&self, spacing: f64) -> Vec<(Point2, f64, Gear)> {
        let mut out: Vec<(Point2, f64, Gear)> = Vec::new();
        for (seg, &gear) in self.segments.iter().zip(&self.gears) {
            let len = seg.length();
            let n = ((len / spacing).ceil() as usize).max(1);
            let first = if out.is_empty() { 0 } else { 1 };
            for k in first..=n {
                let (p, h) = seg.eval(len * k as f64 / n as f64);
                out.push((p, h, gear));
            }
        }
        out
    }
}

/// Head-in arc–line maneuver from `approach` to the slot center.
pub fn parking_maneuver(approach: Pose2D, slot: &ParkingSlot, r_min: f64) -> Result<ParkingManeuver, PlanError> {
    parking_maneuver_with(approach, slot, r_min, ParkDirection::HeadIn)
}

/// Lead-in line, one tangent arc of radius ≥ `r_min`, then a line along the
/// slot axis to the slot center. Back-in drives the same geometry in reverse.
pub fn parking_maneuver_with(
    approach: Pose2D,
    slot: &ParkingSlot,
    r_min: f64,
    direction: ParkDirection,
) -> Result<ParkingManeuver, PlanError> {
    let infeasible = |why: &str| PlanError::GeometricallyInfeasible(why.to_string());
    let p = approach.position();
    if p.distance(slot.entry_point()) > MAX_APPROACH_DISTANCE {
        return Err(infeasible("approach pose too far from the slot entry"));
    }
    let (gear, motion) = match direction {
        ParkDirection::HeadIn => (Gear::Forward, approach.theta),
        ParkDirection::BackIn => (Gear::Reverse, wrap_angle(approach.theta + std::f64::consts::PI)),
    };
    let terminal = match direction {
        ParkDirection::HeadIn => slot.terminal_pose(),
        ParkDirection::BackIn => Pose2D::new(slot.center.x, slot.center.y, slot.heading + std::f64::consts::PI),
    };
    let u = slot.axis();
    let along = |q: Point2| (q - slot.center).dot(u);
    let e = slot.lateral_offset(p);
    let delta = wrap_angle(slot.heading - motion);

    if delta.abs() < ALIGN_TOL && e.abs() < ALIGN_TOL {
        if along(p) > 1e-9 {
            return Err(infeasible("approach is past the slot center"));
        }
        return Ok(ParkingManeuver {
            segments: vec![ManeuverSegment::Line { start: p, end: slot.center }],
            gears: vec![gear],
            terminal,
            direction,
        });
    }
    let (sin_d, one_minus_cos) = (delta.sin(), 1.0 - delta.cos());
    if sin_d.abs() < 1e-9 || delta.abs() < ALIGN_TOL {
        return Err(infeasible("no single tangent arc reaches the slot axis"));
    }
    let s = delta.signum();
    let r_max = s * e / one_minus_cos;
    let r = r_min.max(PREFERRED_RADIUS).min(r_max);
    if !(r >= r_min && r > 0.0) {
        return Err(infeasible("no tangent arc of at least the minimum radius exists"));
    }
    let lead = (e - s * r * one_minus_cos) / sin_d;
    if lead < -1e-9 {
        return Err(infeasible("arc would start behind the approach pose"));
    }
    let lead = lead.max(0.0);
    let h = Point2::from_angle(motion);
    let arc_start = p + h * lead;
    let center = arc_start + h.perp() * (s * r);
    let arc_end = center - Point2::from_angle(slot.heading).perp() * (s * r);
    if along(arc_end) > 1e-9 {
        return Err(infeasible("arc overshoots the slot center"));
    }
    let start_angle = (arc_start - center).angle();
    let end_angle = (arc_end - center).angle();
    let mut segments = Vec::new();
    if lead > 1e-9 {
        segments.push(ManeuverSegment::Line { start: p, end: arc_start });
    }
    segments.push(ManeuverSegment::Arc { center, radius: r, start_angle, end_angle, direction: s });
    if arc_end.distance(slot.center) > 1e-9 {
        segments.push(ManeuverSegment::Line { start: arc_end, end: slot.center });
    }
    let gears = vec![gear; segments.len()];
    Ok(ParkingManeuver { segments, gears, terminal, direction })
}
