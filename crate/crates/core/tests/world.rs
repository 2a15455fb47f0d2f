use proptest::prelude::*;
use upark::bench::{planning_grid, replica_scenario, REPLICA_SCENARIO};
use upark::geometry::{Polygon, Rect};
use upark::world::*;
use upark::{LotScenario, Point2};

fn open_lot() -> LotScenario {
    let mut s = replica_scenario();
    s.obstacles.clear();
    s.grid_resolution = 0.5;
    s
}

fn rect_poly(x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    Polygon(vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)])
}

#[test]
fn bundled_lot_is_valid() {
    let s = load_scenario(REPLICA_SCENARIO).unwrap();
    assert!((s.bounds.width() - 30.2).abs() < 1e-9 && (s.bounds.height() - 37.9).abs() < 1e-9);
    assert_eq!(s.anchors.len(), 8);
    assert!(s.free_slots().count() > 0);
    assert!(!s.nlos_zones().is_empty());
    assert!(!s.in_nlos_zone(s.entry_pose.position()));
}

#[test]
fn file_loading_names_scenario_after_stem() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("north_lot.scn");
    std::fs::write(&path, emit_scenario(&replica_scenario())).unwrap();
    let s = load_scenario_file(&path).unwrap();
    assert_eq!(s.name, "north_lot");
    assert!(matches!(load_scenario_file(dir.path().join("missing.scn")), Err(WorldError::Io(_))));
}

#[test]
fn occupancy_copy_leaves_original() {
    let s = replica_scenario();
    let id = s.free_slots().next().unwrap().id.clone();
    let t = set_slot_occupancy(&s, &id, true).unwrap();
    assert!(t.slot(&id).unwrap().occupied);
    assert!(!s.slot(&id).unwrap().occupied);
    assert_eq!(set_slot_occupancy(&s, "nope", true), Err(WorldError::UnknownSlot("nope".into())));
}

#[test]
fn planning_grid_blocks_parked_cars_and_perimeter() {
    let s = replica_scenario();
    let g = planning_grid(&s);
    for slot in &s.slots {
        assert_eq!(g.is_free_point(slot.center), !slot.occupied, "slot {}", slot.id);
    }
    for x in 0..g.width as i32 {
        assert!(g.is_occupied(Cell::new(x, 0)) && g.is_occupied(Cell::new(x, g.height as i32 - 1)));
    }
    assert!(g.is_free_point(s.entry_pose.position()));
}

#[test]
fn candidate_nodes_are_free_and_spread() {
    let s = replica_scenario();
    let g = planning_grid(&s);
    let nodes = extract_candidate_nodes(&g, &s);
    assert!(nodes.len() >= 10);
    for (i, a) in nodes.iter().enumerate() {
        assert!(g.is_free_point(*a));
        for b in &nodes[..i] {
            assert!(a.distance(*b) >= NODE_SPACING - 1e-9);
        }
    }
}

#[test]
fn clearance_is_zero_on_obstacles() {
    let mut s = open_lot();
    s.obstacles.push(rect_poly(10.0, 10.0, 12.0, 12.0));
    let g = rasterize(&s, 0.0);
    let c = clearance_map(&g);
    for (i, &occ) in g.cells.iter().enumerate() {
        assert_eq!(occ, c[i] == 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rasterized_box_matches_cell_overlap(
        x0 in 1.0f64..25.0, y0 in 1.0f64..30.0, w in 0.2f64..4.0, h in 0.2f64..4.0,
    ) {
        let mut s = open_lot();
        s.obstacles.push(rect_poly(x0, y0, x0 + w, y0 + h));
        let g = rasterize(&s, 0.0);
        for idx in 0..g.cells.len() {
            let r = g.cell_rect(g.cell_at(idx));
            let ox = (r.max.x.min(x0 + w) - r.min.x.max(x0)).max(0.0);
            let oy = (r.max.y.min(y0 + h) - r.min.y.max(y0)).max(0.0);
            let overlap = ox * oy > 1e-9;
            let sliver = ox * oy > 0.0 && !overlap;
            if !sliver {
                prop_assert_eq!(g.cells[idx], overlap, "cell {:?}", g.cell_at(idx));
            }
        }
    }

    #[test]
    fn line_of_sight_is_symmetric(
        ax in 0.0f64..30.0, ay in 0.0f64..37.0, bx in 0.0f64..30.0, by in 0.0f64..37.0,
    ) {
        let mut s = open_lot();
        s.obstacles.push(rect_poly(10.0, 10.0, 14.0, 20.0));
        let (a, b) = (Point2::new(ax, ay), Point2::new(bx, by));
        prop_assert_eq!(line_of_sight(&s, a, b), line_of_sight(&s, b, a));
        let inside = Rect::new(Point2::new(10.0, 10.0), Point2::new(14.0, 20.0));
        if inside.contains(a) && !inside.contains(b) && a.x > 10.0 && a.x < 14.0 && a.y > 10.0 && a.y < 20.0 {
            prop_assert!(!line_of_sight(&s, a, b));
        }
    }

    #[test]
    fn emit_then_load_round_trips(occupied in prop::collection::vec(any::<bool>(), 36), res in 0.1f64..1.0) {
        let mut s = replica_scenario();
        s.grid_resolution = res;
        for (slot, occ) in s.slots.iter_mut().zip(occupied) {
            slot.occupied = occ;
        }
        let mut back = load_scenario(&emit_scenario(&s)).unwrap();
        back.name = s.name.clone();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn cell_of_inverts_cell_center(x in 0i32..60, y in 0i32..75) {
        let g = planning_grid(&replica_scenario());
        let c = Cell::new(x.min(g.width as i32 - 1), y.min(g.height as i32 - 1));
        prop_assert_eq!(g.cell_of(g.cell_center(c)), c);
    }
}
