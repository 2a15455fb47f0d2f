use proptest::prelude::*;
use upark::bench::{planning_grid, replica_scenario};
use upark::control::*;
use upark::planner::{plan_route, PlannerConfig, ReferenceTrajectory};
use upark::Pose2D;

/// Plant with perfect state knowledge.
struct Ideal {
    state: VehicleState,
    limits: VehicleLimits,
}

impl Plant for Ideal {
    fn time(&self) -> f64 {
        self.state.timestamp
    }

    fn true_pose(&self) -> Pose2D {
        self.state.pose
    }

    fn estimate(&mut self) -> Estimate {
        Estimate { pose: self.state.pose, updated: true, gated: false, timestamp: self.state.timestamp }
    }

    fn apply(&mut self, cmd: ControlCommand, dt: f64) -> Result<(), ControlError> {
        self.state = vehicle_step(&self.state, &cmd, dt, &self.limits)?;
        Ok(())
    }
}

fn route() -> ReferenceTrajectory {
    let scn = replica_scenario();
    let grid = planning_grid(&scn);
    let slot = scn.free_slots().next().unwrap().id.clone();
    plan_route(&scn, &grid, scn.entry_pose, &slot, &[], &PlannerConfig::default()).unwrap().trajectory
}

#[test]
fn vehicle_step_rejects_bad_input() {
    let s = VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0);
    let lim = VehicleLimits::default();
    assert_eq!(vehicle_step(&s, &ControlCommand::new(1.0, 0.0), 0.0, &lim), Err(ControlError::NonPositiveDt(0.0)));
    assert!(matches!(vehicle_step(&s, &ControlCommand::new(3.0, 0.0), 0.1, &lim), Err(ControlError::LimitViolation { .. })));
    let quarter = vehicle_step(&s, &ControlCommand::new(1.0, 1.0), std::f64::consts::FRAC_PI_2, &lim).unwrap();
    assert!((quarter.pose.x - 1.0).abs() < 1e-12 && (quarter.pose.y - 1.0).abs() < 1e-12);
}

#[test]
fn ideal_plant_tracks_route_closely() {
    let traj = route();
    let mut plant = Ideal { state: VehicleState::at_rest(traj.samples[0].pose, 0.0), limits: VehicleLimits::default() };
    let cfg = TrackConfig { adaptive: false, ..TrackConfig::default() };
    let mut rows = 0;
    let mut count = |_: &LogRow| rows += 1;
    let out = track(&traj, &mut plant, &cfg, Some(&mut count)).unwrap();
    assert!(out.succeeded());
    assert_eq!(rows, out.log.rows.len());
    assert_eq!(out.cost_regressions, 0);
    assert!(out.final_true_pose.position().distance(traj.terminal().position()) < 0.05);
    let worst = out.log.rows.iter().map(|r| r.true_pose.position().distance(r.ref_pose.position())).fold(0.0, f64::max);
    assert!(worst < 0.3, "worst lag {worst}");
    let lim = VehicleLimits::default();
    for w in out.log.rows.windows(2) {
        assert!(w[1].cmd.within_box(&lim) && w[1].cmd.within_rate(&w[0].cmd, &lim));
    }
}

#[test]
fn empty_trajectory_is_an_error() {
    let mut plant = Ideal { state: VehicleState::at_rest(Pose2D::new(0.0, 0.0, 0.0), 0.0), limits: VehicleLimits::default() };
    let err = track(&ReferenceTrajectory { samples: vec![] }, &mut plant, &TrackConfig::default(), None).unwrap_err();
    assert_eq!(err, ControlError::EmptyTrajectory);
}

#[test]
fn log_csv_round_trips_row_count() {
    let traj = route();
    let mut plant = Ideal { state: VehicleState::at_rest(traj.samples[0].pose, 0.0), limits: VehicleLimits::default() };
    let out = track(&traj, &mut plant, &TrackConfig::default(), None).unwrap();
    let mut buf = Vec::new();
    out.log.write_csv(&mut buf).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    assert_eq!(rd.records().count(), out.log.rows.len());
}

#[test]
fn adapted_weights_interpolate_between_extremes() {
    let cfg = MpcConfig::default();
    let w = cfg.weights;
    let lo = adapt_weights(&cfg, 0.0);
    assert!((lo.w_p - w.w_p * cfg.w_p_min_scale).abs() < 1e-12);
    assert!((lo.w_v - w.w_v * cfg.delta_penalty_max_scale).abs() < 1e-12);
    assert_eq!(lo.w_term, w.w_term);
    assert_eq!(adapt_weights(&cfg, 1.0), w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn mpc_respects_limits_and_beats_zero(
        x in -1.0f64..1.0, y in -1.0f64..1.0, th in -3.0f64..3.0,
        pv in -1.5f64..1.5, pw in -1.5f64..1.5,
        heading in -3.0f64..3.0, speed in 0.0f64..1.2, rel in 0.0f64..1.0,
    ) {
        let cfg = MpcConfig::default();
        let refs: Vec<_> = (1..=cfg.horizon)
            .map(|k| {
                let s = speed * cfg.dt * k as f64;
                Pose2D::new(s * heading.cos(), s * heading.sin(), heading)
            })
            .collect();
        let prev = ControlCommand::new(pv, pw);
        let w = adapt_weights(&cfg, rel);
        let sol = mpc_solve(Pose2D::new(x, y, th), &refs, prev, &w, &cfg, None);
        prop_assert_eq!(sol.sequence.len(), cfg.horizon);
        let mut before = prev;
        for u in &sol.sequence {
            prop_assert!(u.within_box(&cfg.limits));
            prop_assert!(u.within_rate(&before, &cfg.limits));
            before = *u;
        }
        prop_assert!(sol.cost <= sol.zero_cost + 1e-12);
        let recomputed = mpc_cost(Pose2D::new(x, y, th), &sol.sequence, &refs, prev, &w, cfg.dt);
        prop_assert!((recomputed - sol.cost).abs() <= 1e-9 * sol.cost.max(1.0));
    }

    #[test]
    fn rollout_matches_stepping(v in -1.5f64..1.5, w in -1.5f64..1.5, n in 1usize..20) {
        let lim = VehicleLimits::default();
        let seq = vec![ControlCommand::new(v, w); n];
        let x0 = Pose2D::new(1.0, -2.0, 0.7);
        let pred = rollout(x0, &seq, 0.1);
        let mut s = VehicleState::at_rest(x0, 0.0);
        for (k, u) in seq.iter().enumerate() {
            s = vehicle_step(&s, u, 0.1, &lim).unwrap();
            prop_assert!(s.pose.position().distance(pred[k].position()) < 1e-8);
        }
    }
}
