//! 8-connected A* over the occupancy grid and its waypoint-guided variant.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;
use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::geometry::Point2;
use crate::world::{Cell, OccupancyGrid};

/// Waypoints farther than this from any free cell are dropped, meters.
pub const WAYPOINT_SNAP_RADIUS: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPath {
    pub cells: Vec<Cell>,
    /// Meters.
    pub cost: f64,
    /// Closed-set insertions across all searches that produced this path.
    pub expanded_nodes: usize,
}

impl GridPath {
    pub fn points(&self, grid: &OccupancyGrid) -> Vec<Point2> {
        self.cells.iter().map(|&c| grid.cell_center(c)).collect()
    }
}

const NEIGHBORS: [(i32, i32); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (1, -1),
    (-1, 1),
    (-1, -1),
];

/// Step cost in cells (1 or √2) for a move between 8-neighbors.
pub fn step_cost(a: Cell, b: Cell) -> f64 {
    if a.x != b.x && a.y != b.y {
        std::f64::consts::SQRT_2
    } else {
        1.0
    }
}

/// Legal successors: free 8-neighbors, without cutting occupied corners.
pub fn successors(grid: &OccupancyGrid, c: Cell) -> impl Iterator<Item = Cell> + '_ {
    NEIGHBORS.iter().filter_map(move |&(dx, dy)| {
        let n = Cell::new(c.x + dx, c.y + dy);
        if grid.is_occupied(n) {
            return None;
        }
        if dx != 0 && dy != 0
            && (grid.is_occupied(Cell::new(c.x + dx, c.y)) || grid.is_occupied(Cell::new(c.x, c.y + dy)))
        {
            return None;
        }
        Some(n)
    })
}

fn octile(a: Cell, b: Cell) -> f64 {
    let dx = (a.x - b.x).abs() as f64;
    let dy = (a.y - b.y).abs() as f64;
    let (lo, hi) = if dx < dy { (dx, dy) } else { (dy, dx) };
    hi + (std::f64::consts::SQRT_2 - 1.0) * lo
}

/// Sum of step costs along consecutive cells, meters.
pub fn path_cost(cells: &[Cell], resolution: f64) -> f64 {
    cells.windows(2).map(|w| step_cost(w[0], w[1])).sum::<f64>() * resolution
}

#[derive(Debug, Clone, Copy)]
struct Open {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for Open {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Open {
    // Max-heap: smallest f first, then largest g, then smallest index.
    fn cmp(&self, o: &Self) -> Ordering {
        o.f.total_cmp(&self.f)
            .then(self.g.total_cmp(&o.g))
            .then(o.idx.cmp(&self.idx))
    }
}

/// Optimal 8-connected path under the octile heuristic.
pub fn astar(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Result<GridPath, PlanError> {
    if grid.is_occupied(start) {
        return Err(PlanError::BlockedCell(start));
    }
    if grid.is_occupied(goal) {
        return Err(PlanError::UnreachableGoal { expanded_nodes: 0 });
    }
    let n = grid.cells.len();
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = grid.index(start);
    g[s] = 0.0;
    open.push(Open { f: octile(start, goal), g: 0.0, idx: s });
    let mut expanded = 0usize;
    let goal_idx = grid.index(goal);
    while let Some(Open { g: gc, idx, .. }) = open.pop() {
        if closed[idx] || gc > g[idx] {
            continue;
        }
        closed[idx] = true;
        expanded += 1;
        if idx == goal_idx {
            let mut cells = vec![goal];
            let mut cur = idx;
            while parent[cur] != usize::MAX {
                cur = parent[cur];
                cells.push(grid.cell_at(cur));
            }
            cells.reverse();
            let cost = path_cost(&cells, grid.resolution);
            return Ok(GridPath { cells, cost, expanded_nodes: expanded });
        }
        let c = grid.cell_at(idx);
        for nb in successors(grid, c) {
            let ni = grid.index(nb);
            if closed[ni] {
                continue;
            }
            let ng = gc + step_cost(c, nb);
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = idx;
                open.push(Open { f: ng + octile(nb, goal), g: ng, idx: ni });
            }
        }
    }
    Err(PlanError::UnreachableGoal { expanded_nodes: expanded })
}

/// Snaps a waypoint to the nearest free cell within [`WAYPOINT_SNAP_RADIUS`].
pub fn snap_waypoint(grid: &OccupancyGrid, p: Point2) -> Option<Cell> {
    grid.nearest_free(p, WAYPOINT_SNAP_RADIUS)
}

/// Expansions of a leg, not counting a junction cell already closed by the
/// previous leg.
fn leg_expansions(leg: &GridPath, cells_so_far: usize) -> usize {
    if cells_so_far > 1 {
        leg.expanded_nodes - 1
    } else {
        leg.expanded_nodes
    }
}

/// A* through the ordered waypoints: start → w₁ → … → goal. Waypoints that
/// cannot be snapped or reached are dropped and the leg re-planned to the
/// next target.
pub fn guided_astar(
    grid: &OccupancyGrid,
    start: Cell,
    goal: Cell,
    waypoints: &[Point2],
) -> Result<GridPath, PlanError> {
    let mut cells = vec![start];
    let mut expanded = 0usize;
    let mut current = start;
    for &w in waypoints {
        let Some(target) = snap_waypoint(grid, w) else {
            warn!("dropping waypoint ({:.2}, {:.2}): no free cell within {WAYPOINT_SNAP_RADIUS} m", w.x, w.y);
            continue;
        };
        if target == current || target == goal {
            continue;
        }
        match astar(grid, current, target) {
            Ok(leg) => {
                expanded += leg_expansions(&leg, cells.len());
                cells.extend_from_slice(&leg.cells[1..]);
                current = target;
            }
            Err(PlanError::UnreachableGoal { expanded_nodes }) => {
                expanded += expanded_nodes;
                warn!("dropping unreachable waypoint ({:.2}, {:.2})", w.x, w.y);
            }
            Err(e) => return Err(e),
        }
    }
    match astar(grid, current, goal) {
        Ok(leg) => {
            expanded += leg_expansions(&leg, cells.len());
            cells.extend_from_slice(&leg.cells[1..]);
        }
        Err(PlanError::UnreachableGoal { expanded_nodes }) => {
            return Err(PlanError::UnreachableGoal { expanded_nodes: expanded + expanded_nodes })
        }
        Err(e) => return Err(e),
    }
    let cost = path_cost(&cells, grid.resolution);
    Ok(GridPath { cells, cost, expanded_nodes: expanded })
}
