use proptest::prelude::*;
use upark::bench::{planning_grid, replica_scenario};
use upark::planner::*;
use upark::world::{Cell, OccupancyGrid};
use upark::{Point2, Pose2D};

mod common;
use common::*;

fn grid_from_bits(bits: &[bool], n: usize) -> OccupancyGrid {
    let mut g = OccupancyGrid::new_free(n, n, 0.5, Point2::new(0.0, 0.0));
    g.cells.copy_from_slice(bits);
    g
}

#[test]
fn blocked_or_walled_off_goals_fail() {
    let u = u_wall();
    let wall = Cell::new(18, 15);
    assert!(u.grid.is_occupied(wall));
    assert!(matches!(astar(&u.grid, wall, u.goal), Err(PlanError::BlockedCell(_))));
    let mut g = OccupancyGrid::new_free(10, 10, 1.0, Point2::new(0.0, 0.0));
    for y in 0..10 {
        g.set(Cell::new(5, y), true);
    }
    assert!(matches!(astar(&g, Cell::new(1, 1), Cell::new(8, 8)), Err(PlanError::UnreachableGoal { .. })));
}

#[test]
fn unreachable_waypoint_is_skipped() {
    let u = u_wall();
    let inside_wall = u.grid.cell_center(Cell::new(18, 15));
    let plain = astar(&u.grid, u.start, u.goal).unwrap();
    let guided = guided_astar(&u.grid, u.start, u.goal, &[inside_wall]).unwrap();
    assert_eq!(guided.cells.first(), Some(&u.start));
    assert_eq!(guided.cells.last(), Some(&u.goal));
    assert!(guided.cost >= plain.cost - 1e-9);
}

#[test]
fn routes_reach_every_free_slot() {
    let scn = replica_scenario();
    let grid = planning_grid(&scn);
    let cfg = PlannerConfig::default();
    for slot in scn.free_slots() {
        let r = plan_route(&scn, &grid, scn.entry_pose, &slot.id, &[], &cfg).unwrap();
        let traj = &r.trajectory;
        assert!(traj.samples[0].pose.position().distance(scn.entry_pose.position()) < 1e-9);
        let end = traj.terminal();
        assert!(end.position().distance(slot.center) < 1e-6, "{}", slot.id);
        assert!(traj.samples.windows(2).all(|w| w[1].t > w[0].t));
        assert!(traj.samples.iter().all(|s| s.v.abs() <= cfg.limits.v_max + 1e-9));
        assert_eq!(traj.samples.last().unwrap().phase, Phase::Park);
        assert_eq!(r.stats.guided_cost, r.stats.plain_cost);
    }
}

#[test]
fn occupied_and_unknown_slots_are_refused() {
    let scn = replica_scenario();
    let grid = planning_grid(&scn);
    let taken = scn.slots.iter().find(|s| s.occupied).unwrap();
    let cfg = PlannerConfig::default();
    assert_eq!(plan_route(&scn, &grid, scn.entry_pose, &taken.id, &[], &cfg).unwrap_err(), PlanError::SlotOccupied(taken.id.clone()));
    assert_eq!(plan_route(&scn, &grid, scn.entry_pose, "Q7", &[], &cfg).unwrap_err(), PlanError::UnknownSlot("Q7".into()));
}

#[test]
fn trajectory_csv_has_header_and_rows() {
    let scn = replica_scenario();
    let grid = planning_grid(&scn);
    let slot = scn.free_slots().next().unwrap().id.clone();
    let r = plan_route(&scn, &grid, scn.entry_pose, &slot, &[], &PlannerConfig::default()).unwrap();
    let mut buf = Vec::new();
    r.trajectory.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), r.trajectory.samples.len() + 1);
}

#[test]
fn stationary_reference_holds_pose() {
    let p = Pose2D::new(1.0, 2.0, 0.3);
    let t = ReferenceTrajectory::stationary(p);
    assert_eq!(t.sample_at(-1.0).pose, p);
    assert_eq!(t.sample_at(5.0).pose, p);
    assert_eq!(t.duration(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn astar_cost_matches_dijkstra(bits in prop::collection::vec(prop::bool::weighted(0.3), 144), s in 0usize..144, g in 0usize..144) {
        let mut bits = bits;
        bits[s] = false;
        bits[g] = false;
        let grid = grid_from_bits(&bits, 12);
        let (start, goal) = (grid.cell_at(s), grid.cell_at(g));
        match (astar(&grid, start, goal), dijkstra_cost(&grid, start, goal)) {
            (Ok(p), Some(c)) => {
                prop_assert!((p.cost - c).abs() < 1e-9);
                prop_assert!(p.cells.iter().all(|&c| grid.is_free(c)));
            }
            (Err(_), None) => {}
            (a, b) => prop_assert!(false, "astar {:?} vs oracle {:?}", a.map(|p| p.cost), b),
        }
    }

    #[test]
    fn bezier_interpolates_end_points(pts in prop::array::uniform8(-10.0f64..10.0), t in 0.0f64..1.0) {
        let b: Bezier = [
            Point2::new(pts[0], pts[1]), Point2::new(pts[2], pts[3]),
            Point2::new(pts[4], pts[5]), Point2::new(pts[6], pts[7]),
        ];
        prop_assert!(bezier_point(&b, 0.0).distance(b[0]) < 1e-12);
        prop_assert!(bezier_point(&b, 1.0).distance(b[3]) < 1e-12);
        prop_assert!(bezier_derivative(&b, 0.0).distance((b[1] - b[0]) * 3.0) < 1e-9);
        let h = 1e-6;
        let (lo, hi) = ((t - h).max(0.0), (t + h).min(1.0));
        let fd = (bezier_point(&b, hi) - bezier_point(&b, lo)) * (1.0 / (hi - lo));
        prop_assert!(fd.distance(bezier_derivative(&b, t)) < 1e-4);
    }
}

#[test]
fn reference_speed_and_timing_are_consistent() {
    let scn = replica_scenario();
    let grid = planning_grid(&scn);
    let cfg = PlannerConfig::default();
    for slot in scn.free_slots() {
        let r = plan_route(&scn, &grid, scn.entry_pose, &slot.id, &[], &cfg).unwrap();
        for w in r.trajectory.samples.windows(2) {
            let dt = w[1].t - w[0].t;
            let ds = w[0].pose.position().distance(w[1].pose.position());
            assert!(ds <= 0.5 * (w[0].v.abs() + w[1].v.abs()) * dt + 1e-6 || ds < 1e-9);
            assert!((w[1].v - w[0].v).abs() <= cfg.limits.a_max * dt + 1e-6);
        }
    }
}
