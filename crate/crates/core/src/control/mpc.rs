//! Shooting MPC over unicycle kinematics, solved by projected
//! Levenberg–Marquardt on the stacked residuals.

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::vehicle::{ControlCommand, VehicleLimits};
use super::ControlError;
use crate::geometry::{wrap_angle, Pose2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcWeights {
    pub w_p: f64,
    pub w_theta: f64,
    pub w_v: f64,
    pub w_omega: f64,
    pub w_term: f64,
}

impl Default for MpcWeights {
    fn default() -> Self {
        Self { w_p: 10.0, w_theta: 2.0, w_v: 1.0, w_omega: 1.0, w_term: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    pub horizon: usize,
    pub dt: f64,
    pub weights: MpcWeights,
    pub limits: VehicleLimits,
    /// Position-weight scale at zero reliability (≤ 1).
    pub w_p_min_scale: f64,
    /// Rate-penalty scale at zero reliability (≥ 1).
    pub delta_penalty_max_scale: f64,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 15,
            dt: 0.1,
            weights: MpcWeights::default(),
            limits: VehicleLimits::default(),
            w_p_min_scale: 0.2,
            delta_penalty_max_scale: 3.0,
            max_iters: 50,
            tolerance: 1e-6,
        }
    }
}

impl MpcConfig {
    pub fn validate(&self) -> Result<(), ControlError> {
        let w = &self.weights;
        let weights_ok = [w.w_p, w.w_theta, w.w_v, w.w_omega, w.w_term].iter().all(|x| *x >= 0.0 && x.is_finite());
        if self.horizon < 2
            || !(self.dt > 0.0)
            || !weights_ok
            || !(0.0..=1.0).contains(&self.w_p_min_scale)
            || !(self.delta_penalty_max_scale >= 1.0)
        {
            return Err(ControlError::InvalidConfig);
        }
        Ok(())
    }
}

/// Reliability-scheduled weights: position weight falls and rate penalties
/// rise linearly as the score drops.
pub fn adapt_weights(cfg: &MpcConfig, reliability: f64) -> MpcWeights {
    let s = reliability.clamp(0.0, 1.0);
    let base = cfg.weights;
    let rate_scale = 1.0 + (cfg.delta_penalty_max_scale - 1.0) * (1.0 - s);
    MpcWeights {
        w_p: base.w_p * (cfg.w_p_min_scale + (1.0 - cfg.w_p_min_scale) * s),
        w_v: base.w_v * rate_scale,
        w_omega: base.w_omega * rate_scale,
        ..base
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub command: ControlCommand,
    pub sequence: Vec<ControlCommand>,
    pub cost: f64,
    pub zero_cost: f64,
    pub warm_cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn sinc(h: f64) -> (f64, f64) {
    if h.abs() < 1e-4 {
        let h2 = h * h;
        (1.0 - h2 / 6.0, -h / 3.0 + h * h2 / 30.0)
    } else {
        let (s, c) = h.sin_cos();
        (s / h, (h * c - s) / (h * h))
    }
}

/// Predicted poses x₁…x_N (heading unwrapped).
pub fn rollout(x0: Pose2D, seq: &[ControlCommand], dt: f64) -> Vec<Pose2D> {
    let (mut x, mut y, mut th) = (x0.x, x0.y, x0.theta);
    seq.iter()
        .map(|u| {
            let h = 0.5 * u.omega * dt;
            let (s, _) = sinc(h);
            x += u.v * dt * s * (th + h).cos();
            y += u.v * dt * s * (th + h).sin();
            th += u.omega * dt;
            Pose2D { x, y, theta: th }
        })
        .collect()
}

/// Tracking cost of a command sequence. `reference[k]` is the target for
/// the state after `k + 1` steps.
pub fn mpc_cost(
    x0: Pose2D,
    seq: &[ControlCommand],
    reference: &[Pose2D],
    prev: ControlCommand,
    w: &MpcWeights,
    dt: f64,
) -> f64 {
    let n = seq.len();
    let pred = rollout(x0, seq, dt);
    let mut j = 0.0;
    for k in 0..n {
        let (p, r) = (pred[k], reference[k]);
        let dp = (p.x - r.x).powi(2) + (p.y - r.y).powi(2);
        if k + 1 < n {
            j += w.w_p * dp + w.w_theta * wrap_angle(p.theta - r.theta).powi(2);
        } else {
            j += w.w_term * dp;
        }
        let before = if k == 0 { prev } else { seq[k - 1] };
        j += w.w_v * (seq[k].v - before.v).powi(2) + w.w_omega * (seq[k].omega - before.omega).powi(2);
    }
    j
}

/// Projects a sequence onto the box and rate constraints, step by step.
pub fn project(seq: &mut [ControlCommand], prev: ControlCommand, lim: &VehicleLimits) {
    let clamp = |x: f64, before: f64, step: f64, bound: f64| {
        let lo = (-bound).max(before - step);
        let hi = bound.min(before + step);
        if lo <= hi {
            x.clamp(lo, hi)
        } else {
            x.clamp(-bound, bound)
        }
    };
    let mut before = prev;
    for u in seq.iter_mut() {
        u.v = clamp(u.v, before.v, lim.dv_max, lim.v_max);
        u.omega = clamp(u.omega, before.omega, lim.domega_max, lim.omega_max);
        before = *u;
    }
}

/// Residual vector `r` (with `cost = r·r`) and its Jacobian in the commands.
fn residuals(
    x0: Pose2D,
    seq: &[ControlCommand],
    reference: &[Pose2D],
    prev: ControlCommand,
    w: &MpcWeights,
    dt: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = seq.len();
    let m = 3 * (n - 1) + 2 + 2 * n;
    let mut r = DVector::zeros(m);
    let mut jac = DMatrix::zeros(m, 2 * n);
    let (sp, st, sv, so, sterm) = (w.w_p.sqrt(), w.w_theta.sqrt(), w.w_v.sqrt(), w.w_omega.sqrt(), w.w_term.sqrt());
    let mut sx = vec![0.0; 2 * n];
    let mut sy = vec![0.0; 2 * n];
    let mut sth = vec![0.0; 2 * n];
    let (mut x, mut y, mut th) = (x0.x, x0.y, x0.theta);
    let mut row = 0;
    for k in 0..n {
        let u = seq[k];
        let h = 0.5 * u.omega * dt;
        let (s, ds) = sinc(h);
        let (sn, cs) = (th + h).sin_cos();
        let a13 = -u.v * dt * s * sn;
        let a23 = u.v * dt * s * cs;
        for c in 0..2 * k {
            sx[c] += a13 * sth[c];
            sy[c] += a23 * sth[c];
        }
        sx[2 * k] = dt * s * cs;
        sy[2 * k] = dt * s * sn;
        sth[2 * k] = 0.0;
        sx[2 * k + 1] = u.v * dt * 0.5 * dt * (ds * cs - s * sn);
        sy[2 * k + 1] = u.v * dt * 0.5 * dt * (ds * sn + s * cs);
        sth[2 * k + 1] = dt;
        x += u.v * dt * s * cs;
        y += u.v * dt * s * sn;
        th += u.omega * dt;
        let rf = reference[k];
        let cols = 2 * (k + 1);
        if k + 1 < n {
            r[row] = sp * (x - rf.x);
            r[row + 1] = sp * (y - rf.y);
            r[row + 2] = st * wrap_angle(th - rf.theta);
            for c in 0..cols {
                jac[(row, c)] = sp * sx[c];
                jac[(row + 1, c)] = sp * sy[c];
                jac[(row + 2, c)] = st * sth[c];
            }
            row += 3;
        } else {
            r[row] = sterm * (x - rf.x);
            r[row + 1] = sterm * (y - rf.y);
            for c in 0..cols {
                jac[(row, c)] = sterm * sx[c];
                jac[(row + 1, c)] = sterm * sy[c];
            }
            row += 2;
        }
    }
    for k in 0..n {
        let before = if k == 0 { prev } else { seq[k - 1] };
        r[row] = sv * (seq[k].v - before.v);
        r[row + 1] = so * (seq[k].omega - before.omega);
        jac[(row, 2 * k)] = sv;
        jac[(row + 1, 2 * k + 1)] = so;
        if k > 0 {
            jac[(row, 2 * k - 2)] = -sv;
            jac[(row + 1, 2 * k - 1)] = -so;
        }
        row += 2;
    }
    (r, jac)
}

fn offset(seq: &[ControlCommand], delta: &DVector<f64>, scale: f64) -> Vec<ControlCommand> {
    seq.iter()
        .enumerate()
        .map(|(k, u)| ControlCommand::new(u.v + scale * delta[2 * k], u.omega + scale * delta[2 * k + 1]))
        .collect()
}

/// Solves one MPC problem. `reference` is padded with its last pose up to the
/// horizon; `warm` is an optional initial sequence.
pub fn mpc_solve(
    estimate: Pose2D,
    reference: &[Pose2D],
    prev_cmd: ControlCommand,
    weights: &MpcWeights,
    cfg: &MpcConfig,
    warm: Option<&[ControlCommand]>,
) -> MpcSolution {
    let n = cfg.horizon;
    let mut refs: Vec<Pose2D> = reference.iter().take(n).copied().collect();
    let pad = refs.last().copied().unwrap_or(estimate);
    refs.resize(n, pad);
    let cost = |seq: &[ControlCommand]| mpc_cost(estimate, seq, &refs, prev_cmd, weights, cfg.dt);

    let mut zero = vec![ControlCommand::ZERO; n];
    project(&mut zero, prev_cmd, &cfg.limits);
    let zero_cost = cost(&zero);
    let mut warm_seq: Vec<ControlCommand> = match warm {
        Some(w) => {
            let mut s: Vec<_> = w.iter().take(n).copied().collect();
            let last = s.last().copied().unwrap_or(prev_cmd);
            s.resize(n, last);
            s
        }
        None => vec![prev_cmd; n],
    };
    project(&mut warm_seq, prev_cmd, &cfg.limits);
    let warm_cost = cost(&warm_seq);
    let (mut u, mut j) = if warm_cost <= zero_cost { (warm_seq, warm_cost) } else { (zero.clone(), zero_cost) };

    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (r, jac) = residuals(estimate, &u, &refs, prev_cmd, weights, cfg.dt);
        let g = jac.tr_mul(&r);
        if g.norm() < 1e-10 {
            converged = true;
            break;
        }
        let h = jac.tr_mul(&jac);
        let mut accepted = None;
        for _ in 0..8 {
            let mut a = h.clone();
            for i in 0..2 * n {
                a[(i, i)] += lambda * (h[(i, i)] + 1e-6);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let mut cand = offset(&u, &delta, 1.0);
            project(&mut cand, prev_cmd, &cfg.limits);
            let jc = cost(&cand);
            if jc < j {
                accepted = Some((cand, jc));
                lambda = (lambda * 0.1).max(1e-9);
                break;
            }
            lambda *= 10.0;
        }
        if accepted.is_none() {
            // Projected steepest descent with backtracking.
            let step = 1.0 / (h.diagonal().max() + 1e-9);
            let mut scale = step;
            for _ in 0..12 {
                let mut cand = offset(&u, &g, -scale);
                project(&mut cand, prev_cmd, &cfg.limits);
                let jc = cost(&cand);
                if jc < j {
                    accepted = Some((cand, jc));
                    break;
                }
                scale *= 0.5;
            }
        }
        let Some((cand, jc)) = accepted else {
            converged = true;
            break;
        };
        let decrease = j - jc;
        u = cand;
        j = jc;
        if decrease < cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        debug!("mpc stopped after {iterations} iterations at cost {j:.6}");
    }
    MpcSolution { command: u[0], sequence: u, cost: j, zero_cost, warm_cost, iterations, converged }
}

/// Receding-horizon wrapper that warm-starts from the shifted previous solution.
#[derive(Debug, Clone)]
pub struct MpcController {
    pub cfg: MpcConfig,
    warm: Option<Vec<ControlCommand>>,
}

impl MpcController {
    pub fn new(cfg: MpcConfig) -> Self {
        Self { cfg, warm: None }
    }

    pub fn reset(&mut self) {
        self.warm = None;
    }

    pub fn solve(
        &mut self,
        estimate: Pose2D,
        reference: &[Pose2D],
        prev_cmd: ControlCommand,
        weights: &MpcWeights,
    ) -> MpcSolution {
        let sol = mpc_solve(estimate, reference, prev_cmd, weights, &self.cfg, self.warm.as_deref());
        let mut shifted = sol.sequence[1..].to_vec();
        shifted.push(*sol.sequence.last().unwrap());
        self.warm = Some(shifted);
        sol
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::vehicle::{integrate, VehicleState};
    use proptest::prelude::*;

    #[test]
    fn adapt_extremes_and_midpoint() {
        let cfg = MpcConfig::default();
        assert_eq!(adapt_weights(&cfg, 1.0), cfg.weights);
        let w0 = adapt_weights(&cfg, 0.0);
        assert!((w0.w_p - 2.0).abs() < 1e-12);
        assert!((w0.w_v - 3.0).abs() < 1e-12 && (w0.w_omega - 3.0).abs() < 1e-12);
        assert_eq!((w0.w_theta, w0.w_term), (2.0, 20.0));
        let wh = adapt_weights(&cfg, 0.5);
        assert!((wh.w_p - 6.0).abs() < 1e-12 && (wh.w_v - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn adapt_is_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let cfg = MpcConfig::default();
            let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
            let (wh, wl) = (adapt_weights(&cfg, hi), adapt_weights(&cfg, lo));
            prop_assert!(wh.w_p >= wl.w_p);
            prop_assert!(wh.w_v <= wl.w_v && wh.w_omega <= wl.w_omega);
        }
    }

    #[test]
    fn sinc_rollout_matches_vehicle_step() {
        let seq = [ControlCommand::new(1.0, 0.8), ControlCommand::new(0.5, -1.2), ControlCommand::new(-0.7, 1e-7)];
        let x0 = Pose2D::new(1.0, 2.0, 0.3);
        let pred = rollout(x0, &seq, 0.1);
        let mut st = VehicleState::at_rest(x0, 0.0);
        for (k, u) in seq.iter().enumerate() {
            st = integrate(&st, u, 0.1);
            assert!((st.pose.x - pred[k].x).abs() < 1e-8 && (st.pose.y - pred[k].y).abs() < 1e-8);
            assert!(wrap_angle(st.pose.theta - pred[k].theta).abs() < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let seq: Vec<_> = (0..5).map(|k| ControlCommand::new(0.3 + 0.1 * k as f64, 0.5 - 0.2 * k as f64)).collect();
        let refs: Vec<_> = (1..=5).map(|k| Pose2D::new(0.1 * k as f64, 0.05 * k as f64, 0.2)).collect();
        let w = MpcWeights::default();
        let x0 = Pose2D::new(0.0, 0.0, 0.1);
        let (r0, jac) = residuals(x0, &seq, &refs, ControlCommand::ZERO, &w, 0.1);
        assert!((r0.norm_squared() - mpc_cost(x0, &seq, &refs, ControlCommand::ZERO, &w, 0.1)).abs() < 1e-12);
        let eps = 1e-7;
        for c in 0..10 {
            let mut pert = seq.clone();
            if c % 2 == 0 { pert[c / 2].v += eps } else { pert[c / 2].omega += eps }
            let (r1, _) = residuals(x0, &pert, &refs, ControlCommand::ZERO, &w, 0.1);
            for i in 0..r0.len() {
                assert!(((r1[i] - r0[i]) / eps - jac[(i, c)]).abs() < 1e-5, "row {i} col {c}");
            }
        }
    }

    #[test]
    fn equilibrium_returns_zero() {
        let pose = Pose2D::new(3.0, 4.0, 0.5);
        let refs = vec![pose; 15];
        let sol = mpc_solve(pose, &refs, ControlCommand::ZERO, &MpcWeights::default(), &MpcConfig::default(), None);
        assert!(sol.command.norm() < 1e-3);
    }

    #[test]
    fn no_worse_than_zero_or_warm() {
        let cfg = MpcConfig::default();
        let refs: Vec<_> = (1..=15).map(|k| Pose2D::new(0.1 * k as f64, 0.3, 0.0)).collect();
        let warm = vec![ControlCommand::new(1.5, 1.5); 15];
        let sol = mpc_solve(Pose2D::new(0.0, 0.0, 0.0), &refs, ControlCommand::new(0.5, 0.0), &cfg.weights, &cfg, Some(&warm));
        assert!(sol.cost <= sol.zero_cost && sol.cost <= sol.warm_cost);
        assert!(sol.command.within_box(&cfg.limits));
        assert!(sol.command.within_rate(&ControlCommand::new(0.5, 0.0), &cfg.limits));
    }

    #[test]
    fn two_step_toy_beats_enumeration() {
        let cfg = MpcConfig { horizon: 2, ..Default::default() };
        let lim = cfg.limits;
        let prev = ControlCommand::new(0.4, 0.2);
        let x0 = Pose2D::new(0.0, 0.0, 0.0);
        let refs = [Pose2D::new(0.08, 0.03, 0.3), Pose2D::new(0.15, 0.07, 0.5)];
        let w = cfg.weights;
        let sol = mpc_solve(x0, &refs, prev, &w, &cfg, None);
        let grid = |lo: f64, hi: f64| (0..21).map(move |i| lo + (hi - lo) * i as f64 / 20.0);
        let mut best = f64::INFINITY;
        for v0 in grid(prev.v - lim.dv_max, prev.v + lim.dv_max) {
            for w0 in grid(prev.omega - lim.domega_max, prev.omega + lim.domega_max) {
                let u0 = ControlCommand::new(v0, w0);
                if !u0.within_box(&lim) {
                    continue;
                }
                for v1 in grid(v0 - lim.dv_max, v0 + lim.dv_max) {
                    for w1 in grid(w0 - lim.domega_max, w0 + lim.domega_max) {
                        let u1 = ControlCommand::new(v1, w1);
                        if !u1.within_box(&lim) {
                            continue;
                        }
                        best = best.min(mpc_cost(x0, &[u0, u1], &refs, prev, &w, cfg.dt));
                    }
                }
            }
        }
        assert!(sol.cost <= best * 1.05 + 1e-12, "solver {} vs enumeration {}", sol.cost, best);
    }
}
