//! Closed-loop trajectory tracking.

use std::collections::VecDeque;
use std::io::Write;

use log::warn;
use serde::{Deserialize, Serialize};

use super::mpc::{adapt_weights, MpcConfig, MpcController};
use super::plant::Plant;
use super::vehicle::ControlCommand;
use super::ControlError;
use crate::geometry::Pose2D;
use crate::localization::reliability_from_flags;
use crate::planner::ReferenceTrajectory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    pub mpc: MpcConfig,
    /// Schedule MPC weights on localization reliability.
    pub adaptive: bool,
    pub reliability_window: usize,
    pub settle_radius: f64,
    pub settle_time: f64,
    pub timeout_factor: f64,
    /// Lower bound on the timeout, seconds.
    pub min_timeout: f64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            mpc: MpcConfig::default(),
            adaptive: true,
            reliability_window: 10,
            settle_radius: 0.15,
            settle_time: 1.0,
            timeout_factor: 3.0,
            min_timeout: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t: f64,
    pub true_pose: Pose2D,
    pub est_pose: Pose2D,
    pub ref_pose: Pose2D,
    pub cmd: ControlCommand,
    pub gated: bool,
    pub reliability: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub rows: Vec<LogRow>,
}

impl TrajectoryLog {
    pub fn true_positions(&self) -> Vec<crate::geometry::Point2> {
        self.rows.iter().map(|r| r.true_pose.position()).collect()
    }

    /// Largest turn-rate change between consecutive commands.
    pub fn max_domega(&self) -> f64 {
        self.rows
            .windows(2)
            .map(|w| (w[1].cmd.omega - w[0].cmd.omega).abs())
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "t", "true_x", "true_y", "true_theta", "est_x", "est_y", "est_theta", "ref_x", "ref_y", "ref_theta",
            "cmd_v", "cmd_omega", "gated",
        ])?;
        for r in &self.rows {
            let f = |x: f64| format!("{x:.5}");
            wr.write_record([
                f(r.t),
                f(r.true_pose.x),
                f(r.true_pose.y),
                f(r.true_pose.theta),
                f(r.est_pose.x),
                f(r.est_pose.y),
                f(r.est_pose.theta),
                f(r.ref_pose.x),
                f(r.ref_pose.y),
                f(r.ref_pose.theta),
                f(r.cmd.v),
                f(r.cmd.omega),
                u8::from(r.gated).to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackStatus {
    Completed,
    Timeout,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub status: TrackStatus,
    pub log: TrajectoryLog,
    pub elapsed: f64,
    pub final_true_pose: Pose2D,
    pub final_est_pose: Pose2D,
    pub solves: usize,
    /// Solves whose cost exceeded the zero-command cost (expected 0).
    pub cost_regressions: usize,
}

impl TrackOutcome {
    pub fn succeeded(&self) -> bool {
        self.status == TrackStatus::Completed
    }
}

/// Runs the tracking loop until the trajectory is finished and the estimate
/// has settled at its end, or the timeout passes. `observer` sees every row.
pub fn track<P: Plant + ?Sized>(
    trajectory: &ReferenceTrajectory,
    plant: &mut P,
    cfg: &TrackConfig,
    mut observer: Option<&mut dyn FnMut(&LogRow)>,
) -> Result<TrackOutcome, ControlError> {
    cfg.mpc.validate()?;
    if trajectory.samples.is_empty() {
        return Err(ControlError::EmptyTrajectory);
    }
    let dt = cfg.mpc.dt;
    let nominal = trajectory.duration();
    let timeout = (cfg.timeout_factor * nominal).max(cfg.min_timeout);
    let settle_needed = if trajectory.samples.len() <= 1 { 0.0 } else { cfg.settle_time };
    let terminal = trajectory.terminal().position();
    let t0 = plant.time();

    let mut ctrl = MpcController::new(cfg.mpc);
    let mut prev = ControlCommand::ZERO;
    let mut flags: VecDeque<bool> = VecDeque::new();
    let mut settle_start: Option<f64> = None;
    let mut log = TrajectoryLog::default();
    let mut solves = 0;
    let mut cost_regressions = 0;
    let mut last_est_pose;
    let status = loop {
        let t = plant.time() - t0;
        let est = plant.estimate();
        if est.updated {
            flags.push_back(est.gated);
            while flags.len() > cfg.reliability_window {
                flags.pop_front();
            }
        }
        last_est_pose = est.pose;
        let near = est.pose.position().distance(terminal) < cfg.settle_radius;
        if t + 1e-9 >= nominal && near {
            let since = *settle_start.get_or_insert(t);
            if t - since + 1e-9 >= settle_needed {
                break TrackStatus::Completed;
            }
        } else {
            settle_start = None;
        }
        if t > timeout {
            break TrackStatus::Timeout;
        }
        let reliability = reliability_from_flags(flags.iter().copied()).unwrap_or(1.0);
        let weights = if cfg.adaptive { adapt_weights(&cfg.mpc, reliability) } else { cfg.mpc.weights };
        let refs: Vec<Pose2D> = (1..=cfg.mpc.horizon)
            .map(|k| trajectory.sample_at(t + k as f64 * dt).pose)
            .collect();
        let sol = ctrl.solve(est.pose, &refs, prev, &weights);
        solves += 1;
        if sol.cost > sol.zero_cost + 1e-12 {
            cost_regressions += 1;
            warn!("mpc cost {} above zero-command cost {}", sol.cost, sol.zero_cost);
        }
        let row = LogRow {
            t,
            true_pose: plant.true_pose(),
            est_pose: est.pose,
            ref_pose: trajectory.sample_at(t).pose,
            cmd: sol.command,
            gated: est.gated,
            reliability,
        };
        if let Some(obs) = observer.as_mut() {
            obs(&row);
        }
        log.rows.push(row);
        plant.apply(sol.command, dt)?;
        prev = sol.command;
    };
    Ok(TrackOutcome {
        status,
        elapsed: plant.time() - t0,
        final_true_pose: plant.true_pose(),
        final_est_pose: last_est_pose,
        log,
        solves,
        cost_regressions,
    })
}
