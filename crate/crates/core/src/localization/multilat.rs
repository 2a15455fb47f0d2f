//! Layer 2: Gauss–Newton multilateration and preliminary EMA smoothing.

use nalgebra::{Matrix2, Vector2};

use super::LocalizationError;
use crate::geometry::{Point2, Rect};

const MAX_ITERS: usize = 25;
const STEP_TOL: f64 = 1e-6;
const COND_LIMIT: f64 = 1e8;
const RESTART_SPACING: f64 = 0.5;

/// An accepted, layer-1 filtered range to a known anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilteredRange {
    pub anchor: Point2,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionFix {
    pub position: Point2,
    pub residual_rms: f64,
    pub anchor_count: usize,
    pub timestamp: f64,
    /// Position after preliminary smoothing; equals `position` until smoothed.
    pub smoothed: Point2,
}

/// Sum of squared range residuals at `p`.
pub fn range_objective(ranges: &[FilteredRange], p: Point2) -> f64 {
    ranges
        .iter()
        .map(|r| (p.distance(r.anchor) - r.distance).powi(2))
        .sum()
}

fn normal_equations(ranges: &[FilteredRange], p: Point2) -> (Matrix2<f64>, Vector2<f64>) {
    let mut jtj = Matrix2::zeros();
    let mut jtr = Vector2::zeros();
    for r in ranges {
        let diff = p - r.anchor;
        let dist = diff.norm().max(1e-12);
        let row = Vector2::new(diff.x / dist, diff.y / dist);
        let res = dist - r.distance;
        jtj += row * row.transpose();
        jtr += row * res;
    }
    (jtj, jtr)
}

fn condition_number(m: &Matrix2<f64>) -> f64 {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig.min().abs(), eig.max().abs());
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

enum GnOutcome {
    Converged(Point2),
    Diverged,
}

fn gauss_newton(ranges: &[FilteredRange], start: Point2, bounds: &Rect) -> GnOutcome {
    // Divergence is declared only well outside the lot.
    let margin = 0.5 * bounds.width().max(bounds.height());
    let loose = Rect::new(
        bounds.min - Point2::new(margin, margin),
        bounds.max + Point2::new(margin, margin),
    );
    let mut p = start;
    for _ in 0..MAX_ITERS {
        let (jtj, jtr) = normal_equations(ranges, p);
        let Some(step) = jtj.cholesky().map(|c| -c.solve(&jtr)) else {
            return GnOutcome::Diverged;
        };
        p = p + Point2::new(step.x, step.y);
        if !p.is_finite() || !loose.contains(p) {
            return GnOutcome::Diverged;
        }
        if step.norm() < STEP_TOL {
            break;
        }
    }
    GnOutcome::Converged(p)
}

/// Least-squares position from ≥3 ranges, restarting from the best cell of a
/// 0.5 m grid search when Gauss–Newton leaves the lot.
pub fn layer2_multilaterate(
    ranges: &[FilteredRange],
    initial_guess: Point2,
    bounds: &Rect,
    timestamp: f64,
) -> Result<PositionFix, LocalizationError> {
    if ranges.len() < 3 {
        return Err(LocalizationError::InsufficientAnchors(ranges.len()));
    }
    let mut p = match gauss_newton(ranges, initial_guess, bounds) {
        GnOutcome::Converged(p) if bounds.contains(p) => p,
        _ => {
            let restart = grid_search(ranges, bounds);
            match gauss_newton(ranges, restart, bounds) {
                GnOutcome::Converged(p) => p,
                GnOutcome::Diverged => restart,
            }
        }
    };
    let (jtj, _) = normal_equations(ranges, p);
    if condition_number(&jtj) > COND_LIMIT {
        return Err(LocalizationError::CollinearAnchors);
    }
    if !p.is_finite() {
        p = initial_guess;
    }
    let residual_rms = (range_objective(ranges, p) / ranges.len() as f64).sqrt();
    Ok(PositionFix {
        position: p,
        residual_rms,
        anchor_count: ranges.len(),
        timestamp,
        smoothed: p,
    })
}

fn grid_search(ranges: &[FilteredRange], bounds: &Rect) -> Point2 {
    let nx = (bounds.width() / RESTART_SPACING).floor() as usize;
    let ny = (bounds.height() / RESTART_SPACING).floor() as usize;
    let mut best = (f64::INFINITY, bounds.min);
    for j in 0..=ny {
        for i in 0..=nx {
            let p = bounds.min + Point2::new(i as f64 * RESTART_SPACING, j as f64 * RESTART_SPACING);
            let f = range_objective(ranges, p);
            if f < best.0 {
                best = (f, p);
            }
        }
    }
    best.1
}

/// Exponential moving average of fixes.
pub fn layer2_smooth(
    previous: Option<Point2>,
    fix: &PositionFix,
    alpha: f64,
) -> Result<Point2, LocalizationError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(LocalizationError::InvalidAlpha(alpha));
    }
    Ok(match previous {
        None => fix.position,
        Some(prev) => fix.position * alpha + prev * (1.0 - alpha),
    })
}
