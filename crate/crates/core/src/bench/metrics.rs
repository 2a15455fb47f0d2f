//! Trajectory similarity metrics.

use super::BenchError;
use crate::geometry::{point_segment_distance, Point2};

/// Distance from `p` to the polyline through `reference`.
pub fn polyline_distance(p: Point2, reference: &[Point2]) -> f64 {
    match reference {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => reference
            .windows(2)
            .map(|w| point_segment_distance(p, w[0], w[1]))
            .fold(f64::INFINITY, f64::min),
    }
}

/// Max and mean distance of executed samples to the reference polyline.
pub fn euclidean_errors(executed: &[Point2], reference: &[Point2]) -> Result<(f64, f64), BenchError> {
    if executed.is_empty() || reference.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mut max = 0.0f64;
    let mut sum = 0.0;
    for &p in executed {
        let d = polyline_distance(p, reference);
        max = max.max(d);
        sum += d;
    }
    Ok((max, sum / executed.len() as f64))
}

/// Accumulated cost and step count of the best alignment ending at a cell.
#[derive(Clone, Copy)]
struct Acc {
    cost: f64,
    len: u32,
}

impl Acc {
    fn better(self, other: Acc) -> bool {
        self.cost < other.cost || (self.cost == other.cost && self.len < other.len)
    }
}

/// Full-window DTW alignment: (total cost, warping path length). Among
/// equal-cost alignments the shortest is kept, which keeps the pair
/// symmetric under argument swap.
pub fn dtw_alignment(a: &[Point2], b: &[Point2]) -> Result<(f64, usize), BenchError> {
    if a.is_empty() || b.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let m = b.len();
    let mut prev: Vec<Acc> = Vec::with_capacity(m);
    let mut cur: Vec<Acc> = Vec::with_capacity(m);
    for (i, &p) in a.iter().enumerate() {
        cur.clear();
        for (j, &q) in b.iter().enumerate() {
            let d = p.distance(q);
            let best = match (i, j) {
                (0, 0) => Acc { cost: 0.0, len: 0 },
                (0, _) => cur[j - 1],
                (_, 0) => prev[0],
                _ => {
                    let mut best = prev[j - 1];
                    for cand in [prev[j], cur[j - 1]] {
                        if cand.better(best) {
                            best = cand;
                        }
                    }
                    best
                }
            };
            cur.push(Acc { cost: best.cost + d, len: best.len + 1 });
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let end = prev[m - 1];
    Ok((end.cost, end.len as usize))
}

/// DTW cost divided by warping path length, meters.
pub fn dtw_normalized(a: &[Point2], b: &[Point2]) -> Result<f64, BenchError> {
    let (cost, len) = dtw_alignment(a, b)?;
    Ok(cost / len as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&(x, y)| Point2::new(x, y)).collect()
    }

    #[test]
    fn uniform_offset() {
        let r = pts(&[(0.0, 0.0), (5.0, 0.0), (5.0, 5.0)]);
        let e = pts(&[(1.0, 0.1), (3.0, 0.1), (4.9, 2.0)]);
        let (max, mean) = euclidean_errors(&e, &r).unwrap();
        assert!((max - 0.1).abs() < 1e-12 && (mean - 0.1).abs() < 1e-12);
    }

    #[test]
    fn repeat_aligned() {
        let a = pts(&[(0.0, 0.0), (1.0, 0.0)]);
        let b = pts(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]);
        assert_eq!(dtw_normalized(&a, &b).unwrap(), 0.0);
        assert_eq!(dtw_alignment(&a, &b).unwrap().1, 3);
        assert!(dtw_normalized(&[], &b).is_err());
    }
}
