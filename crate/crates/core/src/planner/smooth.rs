//! Corner rounding with cubic Béziers, then uniform re-interpolation through a
//! clamped cubic B-spline.

use serde::{Deserialize, Serialize};

use super::astar::GridPath;
use super::PlanError;
use crate::geometry::Point2;
use crate::world::OccupancyGrid;

/// Upper bound on a corner's control-arm length, meters.
pub const MAX_ARM: f64 = 1.5;
/// Fraction of the shorter adjacent edge used as control-arm length.
pub const ARM_FRACTION: f64 = 0.4;
/// Output sample spacing, meters.
pub const SAMPLE_SPACING: f64 = 0.05;
/// Spacing of the Bézier points the B-spline interpolates, meters.
const KNOT_SPACING: f64 = 0.25;
const MAX_SHRINKS: u32 = 6;
const DENSE: usize = 16;

pub type Bezier = [Point2; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub point: Point2,
    pub heading: f64,
    pub s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothPath {
    pub segments: Vec<Bezier>,
    pub samples: Vec<PathSample>,
}

impl SmoothPath {
    pub fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.s)
    }

    pub fn points(&self) -> Vec<Point2> {
        self.samples.iter().map(|s| s.point).collect()
    }
}

pub fn bezier_point(b: &Bezier, t: f64) -> Point2 {
    let u = 1.0 - t;
    b[0] * (u * u * u) + b[1] * (3.0 * u * u * t) + b[2] * (3.0 * u * t * t) + b[3] * (t * t * t)
}

pub fn bezier_derivative(b: &Bezier, t: f64) -> Point2 {
    let u = 1.0 - t;
    (b[1] - b[0]) * (3.0 * u * u) + (b[2] - b[1]) * (6.0 * u * t) + (b[3] - b[2]) * (3.0 * t * t)
}

fn line_bezier(a: Point2, b: Point2) -> Bezier {
    [a, a.lerp(b, 1.0 / 3.0), a.lerp(b, 2.0 / 3.0), b]
}

/// Unit tangent at the start of a (possibly degenerate) cubic.
fn start_tangent(b: &Bezier) -> Point2 {
    [b[1], b[2], b[3]]
        .into_iter()
        .map(|p| p - b[0])
        .find(|d| d.norm() > 1e-12)
        .unwrap_or_default()
        .normalized()
}

fn end_tangent(b: &Bezier) -> Point2 {
    [b[2], b[1], b[0]]
        .into_iter()
        .map(|p| b[3] - p)
        .find(|d| d.norm() > 1e-12)
        .unwrap_or_default()
        .normalized()
}

fn dedup(points: &[Point2]) -> Vec<Point2> {
    let mut out: Vec<Point2> = Vec::with_capacity(points.len());
    for &p in points {
        if out.last().is_none_or(|q| q.distance(p) > 1e-9) {
            out.push(p);
        }
    }
    out
}

fn drop_collinear(points: &[Point2]) -> Vec<Point2> {
    if points.len() < 3 {
        return points.to_vec();
    }
    let mut out = vec![points[0]];
    for i in 1..points.len() - 1 {
        let a = *out.last().unwrap();
        let (b, c) = (points[i], points[i + 1]);
        let (u, v) = ((b - a).normalized(), (c - b).normalized());
        if u.cross(v).abs() > 1e-9 || u.dot(v) < 0.0 {
            out.push(b);
        }
    }
    out.push(*points.last().unwrap());
    out
}

/// Removes collinear vertices, then greedily skips vertices while the
/// straight segment stays in free space.
pub fn prune_polyline(points: &[Point2], grid: &OccupancyGrid) -> Vec<Point2> {
    let pts = drop_collinear(&dedup(points));
    if pts.len() < 3 {
        return pts;
    }
    let mut out = vec![pts[0]];
    let mut i = 0;
    while i < pts.len() - 1 {
        let mut j = pts.len() - 1;
        while j > i + 1 && !grid.segment_free(pts[i], pts[j]) {
            j -= 1;
        }
        out.push(pts[j]);
        i = j;
    }
    drop_collinear(&out)
}

/// Piecewise Bézier chain through a polyline: straight runs joined by one
/// cubic per interior vertex. `shrink[k]` scales the arms of corner `k`.
/// Returns the chain and, per segment, the corner it rounds (if any).
pub fn corner_chain(vertices: &[Point2], shrink: &[f64]) -> (Vec<Bezier>, Vec<Option<usize>>) {
    let n = vertices.len();
    if n < 2 {
        return (Vec::new(), Vec::new());
    }
    let mut segs = Vec::new();
    let mut owner = Vec::new();
    let mut cursor = vertices[0];
    for k in 1..n - 1 {
        let (a, v, b) = (vertices[k - 1], vertices[k], vertices[k + 1]);
        let (e_in, e_out) = (v - a, b - v);
        let arm = (ARM_FRACTION * e_in.norm().min(e_out.norm())).min(MAX_ARM) * shrink[k - 1];
        let (u_in, u_out) = (e_in.normalized(), e_out.normalized());
        let p0 = v - u_in * arm;
        let p3 = v + u_out * arm;
        if cursor.distance(p0) > 1e-9 {
            segs.push(line_bezier(cursor, p0));
            owner.push(None);
        }
        segs.push([p0, p0 + u_in * (arm * 2.0 / 3.0), p3 - u_out * (arm * 2.0 / 3.0), p3]);
        owner.push(Some(k - 1));
        cursor = p3;
    }
    let last = vertices[n - 1];
    if cursor.distance(last) > 1e-9 || segs.is_empty() {
        segs.push(line_bezier(cursor, last));
        owner.push(None);
    }
    (segs, owner)
}

/// Dense `(point, cumulative length)` table of a Bézier chain, with the
/// segment index of every entry.
fn chain_table(segs: &[Bezier]) -> Vec<(Point2, f64, usize)> {
    let mut out = vec![(segs[0][0], 0.0, 0)];
    let mut s = 0.0;
    for (i, b) in segs.iter().enumerate() {
        let mut prev = b[0];
        for k in 1..=4 * DENSE {
            let p = bezier_point(b, k as f64 / (4 * DENSE) as f64);
            s += prev.distance(p);
            out.push((p, s, i));
            prev = p;
        }
    }
    out
}

fn point_at_length(table: &[(Point2, f64, usize)], s: f64) -> Point2 {
    let idx = table.partition_point(|e| e.1 < s).clamp(1, table.len() - 1);
    let (a, b) = (table[idx - 1], table[idx]);
    let span = b.1 - a.1;
    if span <= 0.0 {
        b.0
    } else {
        a.0.lerp(b.0, ((s - a.1) / span).clamp(0.0, 1.0))
    }
}

/// Solves `D[i-1] + 4 D[i] + D[i+1] = 3 (Q[i+1] - Q[i-1])` for the interior
/// derivatives of a uniform cubic interpolating spline with clamped ends.
fn spline_derivatives(q: &[Point2], d0: Point2, dm: Point2) -> Vec<Point2> {
    let m = q.len() - 1;
    let mut d = vec![Point2::default(); m + 1];
    d[0] = d0;
    d[m] = dm;
    if m < 2 {
        return d;
    }
    // Thomas algorithm on the (m-1)×(m-1) system.
    let k = m - 1;
    let mut c_prime = vec![0.0; k];
    let mut rhs: Vec<Point2> = (1..m).map(|i| (q[i + 1] - q[i - 1]) * 3.0).collect();
    rhs[0] = rhs[0] - d0;
    rhs[k - 1] = rhs[k - 1] - dm;
    let mut denom = 4.0;
    c_prime[0] = 1.0 / denom;
    rhs[0] = rhs[0] * (1.0 / denom);
    for i in 1..k {
        denom = 4.0 - c_prime[i - 1];
        c_prime[i] = 1.0 / denom;
        rhs[i] = (rhs[i] - rhs[i - 1]) * (1.0 / denom);
    }
    for i in (0..k - 1).rev() {
        rhs[i] = rhs[i] - rhs[i + 1] * c_prime[i];
    }
    d[1..m].copy_from_slice(&rhs);
    d
}

/// Bézier form of the clamped uniform cubic spline interpolating `q`.
pub fn interpolating_spline(q: &[Point2], start_dir: Point2, end_dir: Point2) -> Vec<Bezier> {
    let m = q.len() - 1;
    let h = (1..=m).map(|i| q[i].distance(q[i - 1])).sum::<f64>() / m as f64;
    let d = spline_derivatives(q, start_dir * h, end_dir * h);
    (0..m)
        .map(|i| [q[i], q[i] + d[i] * (1.0 / 3.0), q[i + 1] - d[i + 1] * (1.0 / 3.0), q[i + 1]])
        .collect()
}

/// Arc-length resampling of a Bézier chain at roughly `spacing`.
pub fn resample(segs: &[Bezier], spacing: f64) -> Vec<PathSample> {
    // Dense (segment, parameter, cumulative length) table.
    let mut table = vec![(0usize, 0.0f64, 0.0f64)];
    let mut s = 0.0;
    for (i, b) in segs.iter().enumerate() {
        let mut prev = b[0];
        for k in 1..=DENSE {
            let t = k as f64 / DENSE as f64;
            let p = bezier_point(b, t);
            s += prev.distance(p);
            table.push((i, t, s));
            prev = p;
        }
    }
    let total = s;
    let count = ((total / spacing).ceil() as usize).max(1);
    let heading_at = |i: usize, t: f64| {
        let d = bezier_derivative(&segs[i], t);
        if d.norm() > 1e-12 {
            d.angle()
        } else {
            end_tangent(&segs[i]).angle()
        }
    };
    let mut out = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let target = total * k as f64 / count as f64;
        let idx = table.partition_point(|e| e.2 < target).clamp(1, table.len() - 1);
        let (a, b) = (table[idx - 1], table[idx]);
        let (seg, t) = if a.0 != b.0 {
            let frac = if b.2 > a.2 { (target - a.2) / (b.2 - a.2) } else { 1.0 };
            (b.0, frac.clamp(0.0, 1.0) * b.1)
        } else {
            let frac = if b.2 > a.2 { (target - a.2) / (b.2 - a.2) } else { 1.0 };
            (a.0, a.1 + frac.clamp(0.0, 1.0) * (b.1 - a.1))
        };
        out.push(PathSample { point: bezier_point(&segs[seg], t), heading: heading_at(seg, t), s: 0.0 });
    }
    for k in 1..out.len() {
        out[k].s = out[k - 1].s + out[k].point.distance(out[k - 1].point);
    }
    out
}

/// Smooths a grid path through cell centers.
pub fn smooth(path: &GridPath, grid: &OccupancyGrid) -> Result<SmoothPath, PlanError> {
    let pts = path.points(grid);
    smooth_polyline(&pts, grid, 0, 0)
}

/// Smooths a polyline. The first `pin_head` and last `pin_tail` edges are
/// kept verbatim by the shortcut pruning.
pub fn smooth_polyline(
    points: &[Point2],
    grid: &OccupancyGrid,
    pin_head: usize,
    pin_tail: usize,
) -> Result<SmoothPath, PlanError> {
    let pts = dedup(points);
    if pts.len() == 1 {
        return Ok(SmoothPath {
            segments: Vec::new(),
            samples: vec![PathSample { point: pts[0], heading: 0.0, s: 0.0 }],
        });
    }
    if pts.is_empty() {
        return Err(PlanError::EmptyPath);
    }
    let n = pts.len();
    let (lo, hi) = (pin_head.min(n - 1), n - 1 - pin_tail.min(n - 1));
    let vertices = if lo < hi {
        let mut v = pts[..lo].to_vec();
        v.extend(prune_polyline(&pts[lo..=hi], grid));
        v.extend_from_slice(&pts[hi + 1..]);
        drop_collinear(&dedup(&v))
    } else {
        drop_collinear(&pts)
    };
    let corners = vertices.len().saturating_sub(2);
    let mut shrink = vec![1.0; corners];
    let mut shrinks = vec![0u32; corners];
    loop {
        let (segs, owner) = corner_chain(&vertices, &shrink);
        let samples = spline_samples(&segs);
        let Some(bad) = samples.iter().position(|s| !grid.is_free_point(s.point)) else {
            return Ok(SmoothPath { segments: segs, samples });
        };
        if corners == 0 {
            return Err(PlanError::SmoothingInfeasible { at: samples[bad].point });
        }
        let table = chain_table(&segs);
        let corner = offending_corner(&table, &owner, samples[bad].point);
        if shrinks[corner] >= MAX_SHRINKS {
            return Err(PlanError::SmoothingInfeasible { at: samples[bad].point });
        }
        shrinks[corner] += 1;
        shrink[corner] *= 0.5;
    }
}

fn spline_samples(segs: &[Bezier]) -> Vec<PathSample> {
    let table = chain_table(segs);
    let total = table.last().unwrap().1;
    let m = ((total / KNOT_SPACING).ceil() as usize).max(1);
    let q: Vec<Point2> = (0..=m).map(|k| point_at_length(&table, total * k as f64 / m as f64)).collect();
    let spline = interpolating_spline(&q, start_tangent(&segs[0]), end_tangent(segs.last().unwrap()));
    resample(&spline, SAMPLE_SPACING)
}

/// Corner whose Bézier lies nearest to the colliding point.
fn offending_corner(table: &[(Point2, f64, usize)], owner: &[Option<usize>], p: Point2) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for &(q, _, seg) in table {
        if let Some(c) = owner[seg] {
            let d = q.distance(p);
            if d < best.0 {
                best = (d, c);
            }
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Cell;

    fn de_casteljau(b: &Bezier, t: f64) -> Point2 {
        let mut pts = b.to_vec();
        while pts.len() > 1 {
            pts = pts.windows(2).map(|w| w[0].lerp(w[1], t)).collect();
        }
        pts[0]
    }

    #[test]
    fn bezier_midpoint_closed_form() {
        let b = [Point2::new(0.0, 0.0), Point2::new(0.0, 1.0), Point2::new(1.0, 1.0), Point2::new(1.0, 0.0)];
        let p = bezier_point(&b, 0.5);
        assert!((p.x - 0.5).abs() < 1e-15 && (p.y - 0.75).abs() < 1e-15);
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert!(bezier_point(&b, t).distance(de_casteljau(&b, t)) < 1e-12);
        }
    }

    #[test]
    fn straight_path_stays_collinear() {
        let grid = OccupancyGrid::new_free(40, 10, 0.25, Point2::default());
        let cells: Vec<Cell> = (2..35).map(|x| Cell::new(x, 4)).collect();
        let path = GridPath { cost: 0.0, expanded_nodes: 0, cells };
        let sp = smooth(&path, &grid).unwrap();
        assert_eq!(sp.segments.len(), 1);
        let y = grid.cell_center(Cell::new(0, 4)).y;
        assert!(sp.samples.iter().all(|s| (s.point.y - y).abs() < 1e-9));
        assert!(sp.samples.windows(2).all(|w| w[0].point.distance(w[1].point) <= 0.1));
    }

    #[test]
    fn right_angle_corner_is_c1_and_close() {
        let mut grid = OccupancyGrid::new_free(60, 60, 0.2, Point2::default());
        // Block the diagonal shortcut.
        for idx in 0..grid.cells.len() {
            let p = grid.cell_center(grid.cell_at(idx));
            if p.x < 6.0 && p.y > 3.0 {
                grid.cells[idx] = true;
            }
        }
        let pts = [Point2::new(1.0, 1.0), Point2::new(8.0, 1.0), Point2::new(8.0, 9.0)];
        let sp = smooth_polyline(&pts, &grid, 0, 0).unwrap();
        assert_eq!(sp.segments.len(), 3);
        for w in sp.segments.windows(2) {
            assert!(w[0][3].distance(w[1][0]) < 1e-12);
            let a = end_tangent(&w[0]).angle();
            let b = start_tangent(&w[1]).angle();
            assert!(crate::geometry::wrap_angle(a - b).abs() < 1e-6);
        }
        let arm = (ARM_FRACTION * 7.0f64).min(MAX_ARM);
        let corner = &sp.segments[1];
        for k in 0..=20 {
            let p = de_casteljau(corner, k as f64 / 20.0);
            assert!(p.distance(Point2::new(8.0, 1.0)) <= arm + 1e-12);
        }
    }

    #[test]
    fn pruning_removes_redundant_vertices() {
        let grid = OccupancyGrid::new_free(20, 20, 1.0, Point2::default());
        let pts = [Point2::new(0.5, 0.5), Point2::new(1.5, 1.5), Point2::new(2.5, 1.5), Point2::new(9.5, 9.5)];
        assert_eq!(prune_polyline(&pts, &grid), vec![Point2::new(0.5, 0.5), Point2::new(9.5, 9.5)]);
    }

    #[test]
    fn narrow_corner_shrinks_or_fails() {
        // An L-shaped corridor one cell wide.
        let rows = [
            "#####.##",
            "#####.##",
            "#####.##",
            "#.....##",
            "########",
        ];
        let grid = OccupancyGrid::from_ascii(&rows, 1.0);
        let pts = [Point2::new(1.5, 1.5), Point2::new(5.5, 1.5), Point2::new(5.5, 4.5)];
        match smooth_polyline(&pts, &grid, 0, 0) {
            Ok(sp) => assert!(sp.samples.iter().all(|s| grid.is_free_point(s.point))),
            Err(e) => assert!(matches!(e, PlanError::SmoothingInfeasible { .. })),
        }
    }
}
