//! Lot description, scenario file I/O, occupancy rasterization and the
//! geometry queries the rest of the stack runs against.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{segments_cross_properly, point_segment_distance, Point2, Polygon, Pose2D, Rect};
use crate::sensor::NoiseProfile;

/// Chassis width of the reference differential-drive platform, meters.
pub const DEFAULT_VEHICLE_WIDTH: f64 = 0.7;

/// Half the vehicle width plus a 0.1 m margin.
pub fn default_inflation(vehicle_width: f64) -> f64 {
    0.5 * vehicle_width + 0.1
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("scenario validation error: {0}")]
    Validation(String),
    #[error("unknown slot id `{0}`")]
    UnknownSlot(String),
    #[error("io error: {0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub id: u32,
    #[serde(rename = "pos")]
    pub position: Point2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParkingSlot {
    pub id: String,
    pub center: Point2,
    /// Direction a head-in parked vehicle faces, i.e. from the mouth into the slot.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub occupied: bool,
}

impl ParkingSlot {
    pub fn axis(&self) -> Point2 {
        Point2::from_angle(self.heading)
    }

    /// Midpoint of the slot mouth on the aisle side.
    pub fn entry_point(&self) -> Point2 {
        self.center - self.axis() * (0.5 * self.length)
    }

    /// Signed offset of `p` from the slot center axis (positive to the left).
    pub fn lateral_offset(&self, p: Point2) -> f64 {
        self.axis().cross(p - self.center)
    }

    pub fn terminal_pose(&self) -> Pose2D {
        Pose2D::new(self.center.x, self.center.y, self.heading)
    }
}

/// The world: bounds, fixed obstacles, anchors, slots and the sensor noise model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LotScenario {
    /// Identifier for reports; taken from the file stem, not serialized.
    #[serde(skip)]
    pub name: String,
    pub bounds: Rect,
    pub grid_resolution: f64,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
    pub anchors: Vec<Anchor>,
    pub slots: Vec<ParkingSlot>,
    pub entry_pose: Pose2D,
    #[serde(default)]
    pub noise: NoiseProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nlos_zones: Option<Vec<Polygon>>,
}

fn is_normalized_angle(a: f64) -> bool {
    a.is_finite() && a > -std::f64::consts::PI && a <= std::f64::consts::PI
}

impl LotScenario {
    pub fn slot(&self, id: &str) -> Option<&ParkingSlot> {
        self.slots.iter().find(|s| s.id == id)
    }

    pub fn free_slots(&self) -> impl Iterator<Item = &ParkingSlot> {
        self.slots.iter().filter(|s| !s.occupied)
    }

    pub fn nlos_zones(&self) -> &[Polygon] {
        self.nlos_zones.as_deref().unwrap_or(&[])
    }

    pub fn in_nlos_zone(&self, p: Point2) -> bool {
        self.nlos_zones().iter().any(|z| z.contains_strict(p))
    }

    pub fn set_occupancy(&mut self, slot_id: &str, occupied: bool) -> Result<(), WorldError> {
        let slot = self
            .slots
            .iter_mut()
            .find(|s| s.id == slot_id)
            .ok_or_else(|| WorldError::UnknownSlot(slot_id.to_string()))?;
        slot.occupied = occupied;
        Ok(())
    }

    /// Checks every scenario invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), WorldError> {
        let fail = |m: String| Err(WorldError::Validation(m));
        let b = &self.bounds;
        if !(b.width() > 0.0 && b.height() > 0.0) {
            return fail("bounds must have positive area".into());
        }
        if !(self.grid_resolution > 0.0 && self.grid_resolution.is_finite()) {
            return fail("grid_resolution must be positive".into());
        }
        for (i, poly) in self.obstacles.iter().enumerate() {
            if poly.0.len() < 3 {
                return fail(format!("obstacle {i} has fewer than 3 vertices"));
            }
            if poly.is_self_intersecting() {
                return fail(format!("obstacle {i} is self-intersecting"));
            }
        }
        for (i, poly) in self.nlos_zones().iter().enumerate() {
            if poly.0.len() < 3 {
                return fail(format!("nlos zone {i} has fewer than 3 vertices"));
            }
        }
        for (i, a) in self.anchors.iter().enumerate() {
            if !b.contains(a.position) {
                return fail(format!("anchor {} outside bounds", a.id));
            }
            if self.anchors[..i].iter().any(|o| o.position == a.position) {
                return fail(format!("anchor {} duplicates another anchor position", a.id));
            }
            if self.anchors[..i].iter().any(|o| o.id == a.id) {
                return fail(format!("duplicate anchor id {}", a.id));
            }
        }
        let mut ids = HashSet::new();
        for s in &self.slots {
            if !ids.insert(s.id.as_str()) {
                return fail(format!("duplicate slot id `{}`", s.id));
            }
            if !b.contains(s.center) {
                return fail(format!("slot `{}` center outside bounds", s.id));
            }
            if !(s.length > 0.0 && s.width > 0.0) {
                return fail(format!("slot `{}` must have positive length and width", s.id));
            }
            if !is_normalized_angle(s.heading) {
                return fail(format!("slot `{}` heading not normalized to (-pi, pi]", s.id));
            }
        }
        if !b.contains(self.entry_pose.position()) {
            return fail("entry pose outside bounds".into());
        }
        if !is_normalized_angle(self.entry_pose.theta) {
            return fail("entry pose theta not normalized to (-pi, pi]".into());
        }
        self.noise.validate().map_err(WorldError::Validation)
    }
}

/// Parses and validates a scenario document.
pub fn load_scenario(document: &str) -> Result<LotScenario, WorldError> {
    let s: LotScenario =
        serde_json::from_str(document).map_err(|e| WorldError::Parse(e.to_string()))?;
    s.validate()?;
    Ok(s)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<LotScenario, WorldError> {
    let path = path.as_ref();
    let doc = std::fs::read_to_string(path).map_err(|e| WorldError::Io(e.to_string()))?;
    let mut s = load_scenario(&doc)?;
    s.name = path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(s)
}

pub fn emit_scenario(s: &LotScenario) -> String {
    serde_json::to_string_pretty(s).expect("scenario serializes")
}

/// Returns a copy with one slot's availability flag changed.
pub fn set_slot_occupancy(
    scenario: &LotScenario,
    slot_id: &str,
    occupied: bool,
) -> Result<LotScenario, WorldError> {
    let mut s = scenario.clone();
    s.set_occupancy(slot_id, occupied)?;
    Ok(s)
}

/// Integer cell coordinates: `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub origin: Point2,
    /// Row-major, `true` = occupied.
    pub cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new_free(width: usize, height: usize, resolution: f64, origin: Point2) -> Self {
        Self {
            width,
            height,
            resolution,
            origin,
            cells: vec![false; width * height],
        }
    }

    /// Builds a grid from rows of text, top row first; `#` marks an occupied cell.
    pub fn from_ascii(rows: &[&str], resolution: f64) -> Self {
        let height = rows.len();
        let width = rows.iter().map(|r| r.len()).max().unwrap_or(0);
        let mut g = Self::new_free(width, height, resolution, Point2::default());
        for (r, line) in rows.iter().enumerate() {
            let y = height - 1 - r;
            for (x, ch) in line.chars().enumerate() {
                if ch == '#' {
                    g.set(Cell::new(x as i32, y as i32), true);
                }
            }
        }
        g
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        c.y as usize * self.width + c.x as usize
    }

    pub fn cell_at(&self, idx: usize) -> Cell {
        Cell::new((idx % self.width) as i32, (idx / self.width) as i32)
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        !self.contains(c) || self.cells[self.index(c)]
    }

    pub fn is_free(&self, c: Cell) -> bool {
        !self.is_occupied(c)
    }

    pub fn set(&mut self, c: Cell, occupied: bool) {
        let i = self.index(c);
        self.cells[i] = occupied;
    }

    pub fn cell_rect(&self, c: Cell) -> Rect {
        let min = Point2::new(
            self.origin.x + c.x as f64 * self.resolution,
            self.origin.y + c.y as f64 * self.resolution,
        );
        Rect::new(min, min + Point2::new(self.resolution, self.resolution))
    }

    pub fn cell_center(&self, c: Cell) -> Point2 {
        Point2::new(
            self.origin.x + (c.x as f64 + 0.5) * self.resolution,
            self.origin.y + (c.y as f64 + 0.5) * self.resolution,
        )
    }

    /// Cell containing `p` (may lie outside the grid).
    pub fn cell_of(&self, p: Point2) -> Cell {
        Cell::new(
            ((p.x - self.origin.x) / self.resolution).floor() as i32,
            ((p.y - self.origin.y) / self.resolution).floor() as i32,
        )
    }

    pub fn is_free_point(&self, p: Point2) -> bool {
        p.is_finite() && self.is_free(self.cell_of(p))
    }

    /// Nearest free cell to `p` within `radius` meters (ties by row-major order).
    pub fn nearest_free(&self, p: Point2, radius: f64) -> Option<Cell> {
        let c = self.cell_of(p);
        if self.is_free(c) {
            return Some(c);
        }
        let r = (radius / self.resolution).ceil() as i32;
        let mut best: Option<(f64, Cell)> = None;
        for y in (c.y - r)..=(c.y + r) {
            for x in (c.x - r)..=(c.x + r) {
                let cand = Cell::new(x, y);
                if !self.is_free(cand) {
                    continue;
                }
                let d = self.cell_center(cand).distance(p);
                if d <= radius && best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, cand));
                }
            }
        }
        best.map(|(_, c)| c)
    }

    /// All cells touched by the segment a→b are free (supercover sampling).
    pub fn segment_free(&self, a: Point2, b: Point2) -> bool {
        let len = a.distance(b);
        let steps = ((len / (0.25 * self.resolution)).ceil() as usize).max(1);
        (0..=steps).all(|i| self.is_free_point(a.lerp(b, i as f64 / steps as f64)))
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }
}

/// Rasterizes the fixed obstacles. A cell is occupied iff its area overlaps
/// an obstacle or it lies closer than `inflation` to one.
pub fn rasterize(scenario: &LotScenario, inflation: f64) -> OccupancyGrid {
    let res = scenario.grid_resolution;
    let b = scenario.bounds;
    let width = ((b.width() / res) - 1e-9).ceil().max(1.0) as usize;
    let height = ((b.height() / res) - 1e-9).ceil().max(1.0) as usize;
    let mut grid = OccupancyGrid::new_free(width, height, res, b.min);
    for poly in &scenario.obstacles {
        let bb = poly.bbox();
        let lo = grid.cell_of(bb.min - Point2::new(inflation, inflation));
        let hi = grid.cell_of(bb.max + Point2::new(inflation, inflation));
        for y in lo.y.max(0)..=hi.y.min(height as i32 - 1) {
            for x in lo.x.max(0)..=hi.x.min(width as i32 - 1) {
                let c = Cell::new(x, y);
                if grid.is_occupied(c) {
                    continue;
                }
                let r = grid.cell_rect(c);
                let hit = poly.clipped_area(&r) > 1e-12
                    || (inflation > 0.0 && poly.distance_to_rect(&r) < inflation);
                if hit {
                    grid.set(c, true);
                }
            }
        }
    }
    grid
}

/// Sight test against obstacle polygons. Touching a vertex or sliding along
/// an edge is still line of sight; only passing through an interior blocks.
pub fn line_of_sight(scenario: &LotScenario, from: Point2, to: Point2) -> bool {
    scenario
        .obstacles
        .iter()
        .all(|poly| !segment_blocked_by(poly, from, to))
}

pub(crate) fn segment_blocked_by(poly: &Polygon, a: Point2, b: Point2) -> bool {
    if poly.contains_strict(a) || poly.contains_strict(b) {
        return true;
    }
    if poly.edges().any(|(p, q)| segments_cross_properly(a, b, p, q)) {
        return true;
    }
    // Contacts without a proper crossing: check each sub-segment between
    // boundary contacts for interior passage.
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return false;
    }
    let mut ts = vec![0.0, 1.0];
    for &v in poly.vertices() {
        if point_segment_distance(v, a, b) <= 1e-12 {
            ts.push(((v - a).dot(ab) / len2).clamp(0.0, 1.0));
        }
    }
    if ts.len() == 2 {
        return false;
    }
    ts.sort_by(|x, y| x.total_cmp(y));
    ts.windows(2)
        .filter(|w| w[1] - w[0] > 1e-12)
        .any(|w| poly.contains_strict(a + ab * (0.5 * (w[0] + w[1]))))
}

/// Exact Euclidean distance (meters) from each cell center to the nearest
/// occupied cell center; infinite when the grid has no occupied cell.
pub fn clearance_map(grid: &OccupancyGrid) -> Vec<f64> {
    let (w, h) = (grid.width, grid.height);
    let inf = f64::INFINITY;
    let mut d: Vec<f64> = grid.cells.iter().map(|&o| if o { 0.0 } else { inf }).collect();
    let mut buf = vec![0.0; w.max(h)];
    // Columns.
    for x in 0..w {
        let col: Vec<f64> = (0..h).map(|y| d[y * w + x]).collect();
        edt_1d(&col, &mut buf[..h]);
        for y in 0..h {
            d[y * w + x] = buf[y];
        }
    }
    // Rows.
    for y in 0..h {
        let row: Vec<f64> = d[y * w..(y + 1) * w].to_vec();
        edt_1d(&row, &mut buf[..w]);
        d[y * w..(y + 1) * w].copy_from_slice(&buf[..w]);
    }
    d.iter().map(|v| v.sqrt() * grid.resolution).collect()
}

/// Lower envelope of parabolas (squared distances, unit spacing).
fn edt_1d(f: &[f64], out: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k: usize = 0;
    let first = match f.iter().position(|x| x.is_finite()) {
        Some(i) => i,
        None => {
            out.iter_mut().for_each(|o| *o = f64::INFINITY);
            return;
        }
    };
    v[0] = first;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in (first + 1)..n {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
                continue;
            }
            if s <= z[k] {
                // k == 0 and the new parabola dominates everywhere.
                v[0] = q;
                z[1] = f64::INFINITY;
                break;
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
            break;
        }
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

/// Minimum spacing between extracted candidate nodes, meters.
pub const NODE_SPACING: f64 = 2.0;

/// Lane-midpoint candidates: free cells on a clearance ridge (local maximum
/// along at least one axis), decimated to `NODE_SPACING`.
pub fn extract_candidate_nodes(grid: &OccupancyGrid, scenario: &LotScenario) -> Vec<Point2> {
    let _ = scenario;
    let clearance = clearance_map(grid);
    let (w, h) = (grid.width as i32, grid.height as i32);
    let at = |x: i32, y: i32| -> Option<f64> {
        (x >= 0 && y >= 0 && x < w && y < h).then(|| clearance[(y * w + x) as usize])
    };
    let ridge = |c: f64, n1: Option<f64>, n2: Option<f64>| -> bool {
        let ge = n1.is_none_or(|v| c >= v) && n2.is_none_or(|v| c >= v);
        let gt = n1.is_some_and(|v| c > v) || n2.is_some_and(|v| c > v);
        ge && gt
    };
    let mut cands: Vec<(f64, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let idx = (y * w + x) as usize;
            if grid.cells[idx] {
                continue;
            }
            let c = clearance[idx];
            let keep = c.is_infinite()
                || ridge(c, at(x - 1, y), at(x + 1, y))
                || ridge(c, at(x, y - 1), at(x, y + 1));
            if keep {
                cands.push((c, idx));
            }
        }
    }
    // Highest clearance first, then row-major.
    cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let bucket = NODE_SPACING;
    let mut buckets: std::collections::HashMap<(i64, i64), Vec<Point2>> = Default::default();
    let mut accepted: Vec<(usize, Point2)> = Vec::new();
    for (_, idx) in cands {
        let p = grid.cell_center(grid.cell_at(idx));
        let key = ((p.x / bucket).floor() as i64, (p.y / bucket).floor() as i64);
        let close = (-1..=1).any(|dx| {
            (-1..=1).any(|dy| {
                buckets
                    .get(&(key.0 + dx, key.1 + dy))
                    .is_some_and(|v| v.iter().any(|q| q.distance(p) < NODE_SPACING))
            })
        });
        if !close {
            buckets.entry(key).or_default().push(p);
            accepted.push((idx, p));
        }
    }
    accepted.sort_by_key(|(idx, _)| *idx);
    accepted.into_iter().map(|(_, p)| p).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"{
        "bounds": {"min": [0, 0], "max": [10, 10]},
        "grid_resolution": 1.0,
        "obstacles": [],
        "anchors": [{"id": 1, "pos": [0, 0]}, {"id": 2, "pos": [10, 0]}, {"id": 3, "pos": [0, 10]}],
        "slots": [{"id": "A1", "center": [8, 8], "heading": 1.5707963267948966, "length": 2.0, "width": 1.5, "occupied": false}],
        "entry_pose": {"x": 1, "y": 1, "theta": 0}
    }"#;

    fn with_square(half: f64) -> LotScenario {
        let mut s = load_scenario(MINIMAL).unwrap();
        s.obstacles.push(Polygon(vec![
            Point2::new(5.0 - half, 5.0 - half),
            Point2::new(5.0 + half, 5.0 - half),
            Point2::new(5.0 + half, 5.0 + half),
            Point2::new(5.0 - half, 5.0 + half),
        ]));
        s
    }

    #[test]
    fn minimal_document_loads() {
        let s = load_scenario(MINIMAL).unwrap();
        assert_eq!(s.slots.len(), 1);
        assert_eq!(s.free_slots().count(), 1);
        assert_eq!(s.noise, NoiseProfile::default());
    }

    #[test]
    fn anchor_outside_bounds_rejected() {
        let doc = MINIMAL.replace(r#""pos": [0, 0]"#, r#""pos": [-1, 5]"#);
        let err = load_scenario(&doc).unwrap_err();
        assert!(matches!(&err, WorldError::Validation(m) if m.contains("anchor") && m.contains("outside bounds")), "{err}");
    }

    #[test]
    fn unknown_keys_and_malformed_documents_rejected() {
        let doc = MINIMAL.replacen('{', r#"{"extra": 1,"#, 1);
        assert!(matches!(load_scenario(&doc), Err(WorldError::Parse(_))));
        assert!(matches!(load_scenario("{not json"), Err(WorldError::Parse(_))));
    }

    #[test]
    fn duplicate_slot_and_bad_heading_rejected() {
        let mut s = load_scenario(MINIMAL).unwrap();
        s.slots.push(s.slots[0].clone());
        assert!(matches!(s.validate(), Err(WorldError::Validation(m)) if m.contains("duplicate slot")));
        let mut s = load_scenario(MINIMAL).unwrap();
        s.slots[0].heading = -std::f64::consts::PI;
        assert!(s.validate().is_err());
    }

    #[test]
    fn emit_then_load_round_trips() {
        let s = with_square(1.0);
        let back = load_scenario(&emit_scenario(&s)).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn empty_lot_rasterizes_free() {
        let s = load_scenario(MINIMAL).unwrap();
        let g = rasterize(&s, 0.0);
        assert_eq!((g.width, g.height), (10, 10));
        assert_eq!(g.occupied_count(), 0);
    }

    #[test]
    fn square_obstacle_covers_exact_cells() {
        let g = rasterize(&with_square(1.0), 0.0);
        let occ: Vec<Cell> = (0..g.cells.len()).filter(|&i| g.cells[i]).map(|i| g.cell_at(i)).collect();
        assert_eq!(occ, vec![Cell::new(4, 4), Cell::new(5, 4), Cell::new(4, 5), Cell::new(5, 5)]);
    }

    #[test]
    fn inflation_grows_one_ring() {
        let g = rasterize(&with_square(1.0), 1.0);
        assert_eq!(g.occupied_count(), 16);
        for y in 3..=6 {
            for x in 3..=6 {
                assert!(g.is_occupied(Cell::new(x, y)));
            }
        }
    }

    #[test]
    fn los_rules() {
        let s = with_square(1.0);
        let e = load_scenario(MINIMAL).unwrap();
        assert!(line_of_sight(&e, Point2::new(0.5, 0.5), Point2::new(9.5, 9.5)));
        assert!(!line_of_sight(&s, Point2::new(0.5, 5.0), Point2::new(9.5, 5.0)));
        // Grazing the vertex (6, 6) of the square.
        assert!(line_of_sight(&s, Point2::new(4.0, 8.0), Point2::new(8.0, 4.0)));
        // Sliding along the top edge.
        assert!(line_of_sight(&s, Point2::new(2.0, 6.0), Point2::new(8.0, 6.0)));
        // Through two opposite vertices crosses the interior.
        assert!(!line_of_sight(&s, Point2::new(3.0, 3.0), Point2::new(7.0, 7.0)));
    }

    #[test]
    fn occupancy_updates_and_unknown_slot() {
        let s = load_scenario(MINIMAL).unwrap();
        let occ = set_slot_occupancy(&s, "A1", true).unwrap();
        assert!(occ.slot("A1").unwrap().occupied);
        assert_eq!(set_slot_occupancy(&occ, "A1", false).unwrap(), s);
        assert_eq!(set_slot_occupancy(&s, "Z9", true), Err(WorldError::UnknownSlot("Z9".into())));
    }

    #[test]
    fn edt_matches_brute_force() {
        let mut g = OccupancyGrid::new_free(17, 11, 0.5, Point2::default());
        for &(x, y) in &[(3, 4), (10, 2), (16, 10), (0, 0), (8, 8)] {
            g.set(Cell::new(x, y), true);
        }
        let d = clearance_map(&g);
        let occ: Vec<Cell> = (0..g.cells.len()).filter(|&i| g.cells[i]).map(|i| g.cell_at(i)).collect();
        for i in 0..g.cells.len() {
            let c = g.cell_at(i);
            let bf = occ
                .iter()
                .map(|o| g.cell_center(*o).distance(g.cell_center(c)))
                .fold(f64::INFINITY, f64::min);
            assert!((d[i] - bf).abs() < 1e-9, "cell {c:?}: {} vs {bf}", d[i]);
        }
    }

    #[test]
    fn fully_occupied_grid_has_no_nodes() {
        let s = load_scenario(MINIMAL).unwrap();
        let mut g = rasterize(&s, 0.0);
        g.cells.iter_mut().for_each(|c| *c = true);
        assert!(extract_candidate_nodes(&g, &s).is_empty());
    }
}
