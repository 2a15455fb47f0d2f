#![allow(dead_code)]

use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::mpsc;
use std::thread;

use nalgebra::{Matrix2, Matrix4, Vector2, Vector4};
use upark::bench::{replica_scenario, MethodConfig, MethodVariant};
use upark::coordination::*;
use upark::world::{Cell, OccupancyGrid};
use upark::{LotScenario, Point2};

pub const U_WALL: &str = include_str!("../../data/u_wall.grid");

pub struct UWall {
    pub grid: OccupancyGrid,
    pub start: Cell,
    pub goal: Cell,
    pub waypoint: Point2,
}

/// The U-wall grid at 1 m resolution with its S, G and W markers.
pub fn u_wall() -> UWall {
    let rows: Vec<&str> = U_WALL.lines().filter(|l| !l.is_empty()).collect();
    let grid = OccupancyGrid::from_ascii(&rows, 1.0);
    let find = |m: char| {
        rows.iter()
            .enumerate()
            .find_map(|(r, line)| line.find(m).map(|x| Cell::new(x as i32, (rows.len() - 1 - r) as i32)))
            .unwrap()
    };
    let w = find('W');
    UWall { start: find('S'), goal: find('G'), waypoint: grid.cell_center(w), grid }
}

/// Uniform-cost search with the planner's move rules, meters.
pub fn dijkstra_cost(grid: &OccupancyGrid, start: Cell, goal: Cell) -> Option<f64> {
    let (w, h) = (grid.width as i32, grid.height as i32);
    let free = |x: i32, y: i32| x >= 0 && y >= 0 && x < w && y < h && !grid.cells[(y * w + x) as usize];
    if !free(start.x, start.y) || !free(goal.x, goal.y) {
        return None;
    }
    let n = (w * h) as usize;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    dist[(start.y * w + start.x) as usize] = 0.0;
    // O(n²) selection keeps the oracle free of heap tie-breaking subtleties.
    loop {
        let mut best = None;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && best.is_none_or(|b: usize| dist[i] < dist[b]) {
                best = Some(i);
            }
        }
        let Some(u) = best else { return None };
        done[u] = true;
        let (x, y) = ((u as i32) % w, (u as i32) / w);
        if x == goal.x && y == goal.y {
            return Some(dist[u] * grid.resolution);
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if (dx, dy) == (0, 0) || !free(x + dx, y + dy) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal && (!free(x + dx, y) || !free(x, y + dy)) {
                    continue;
                }
                let v = ((y + dy) * w + x + dx) as usize;
                let c = dist[u] + if diagonal { 2f64.sqrt() } else { 1.0 };
                if c < dist[v] {
                    dist[v] = c;
                }
            }
        }
    }
}

/// Top-down recursive DTW returning (cost, path length), preferring the
/// shorter path among equal costs.
pub fn dtw_oracle(a: &[Point2], b: &[Point2]) -> (f64, usize) {
    fn go(i: usize, j: usize, a: &[Point2], b: &[Point2], memo: &mut HashMap<(usize, usize), (f64, usize)>) -> (f64, usize) {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let d = a[i].distance(b[j]);
        let r = if i == 0 && j == 0 {
            (d, 1)
        } else {
            let mut cands = Vec::new();
            if i > 0 && j > 0 {
                cands.push(go(i - 1, j - 1, a, b, memo));
            }
            if i > 0 {
                cands.push(go(i - 1, j, a, b, memo));
            }
            if j > 0 {
                cands.push(go(i, j - 1, a, b, memo));
            }
            let best = cands
                .into_iter()
                .reduce(|x, y| if y.0 < x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x })
                .unwrap();
            (best.0 + d, best.1 + 1)
        };
        memo.insert((i, j), r);
        r
    }
    go(a.len() - 1, b.len() - 1, a, b, &mut HashMap::new())
}

/// Distance to a polyline by sampling it every `step` meters.
pub fn dense_polyline_distance(p: Point2, poly: &[Point2], step: f64) -> f64 {
    let mut best = f64::INFINITY;
    for w in poly.windows(2) {
        let len = w[0].distance(w[1]);
        let n = (len / step).ceil().max(1.0) as usize;
        for k in 0..=n {
            best = best.min(p.distance(w[0].lerp(w[1], k as f64 / n as f64)));
        }
    }
    if poly.len() == 1 {
        best = p.distance(poly[0]);
    }
    best
}

/// Textbook EKF on [x, y, θ, v] with unicycle prediction and a position
/// measurement, written independently of the library.
pub struct TextbookEkf {
    pub x: Vector4<f64>,
    pub p: Matrix4<f64>,
}

fn wrap(a: f64) -> f64 {
    a.sin().atan2(a.cos())
}

impl TextbookEkf {
    pub fn predict(&mut self, yaw_rate: f64, speed: f64, dt: f64, q_per_tenth: [f64; 4]) {
        let (th, v) = (self.x[2], self.x[3]);
        let mut f = Matrix4::identity();
        f[(0, 2)] = -v * th.sin() * dt;
        f[(0, 3)] = th.cos() * dt;
        f[(1, 2)] = v * th.cos() * dt;
        f[(1, 3)] = th.sin() * dt;
        f[(3, 3)] = 0.0;
        self.x = Vector4::new(
            self.x[0] + v * th.cos() * dt,
            self.x[1] + v * th.sin() * dt,
            wrap(th + yaw_rate * dt),
            speed,
        );
        let q = Matrix4::from_diagonal(&Vector4::from(q_per_tenth)) * (dt / 0.1);
        self.p = f * self.p * f.transpose() + q;
    }

    pub fn update(&mut self, z: Vector2<f64>, r: Matrix2<f64>) {
        let mut h = nalgebra::Matrix2x4::zeros();
        h[(0, 0)] = 1.0;
        h[(1, 1)] = 1.0;
        let y = z - h * self.x;
        let s = h * self.p * h.transpose() + r;
        let k = self.p * h.transpose() * s.try_inverse().unwrap();
        self.x += k * y;
        self.x[2] = wrap(self.x[2]);
        self.p = (Matrix4::identity() - k * h) * self.p;
    }
}

/// The bundled lot with only `free` slots available.
pub fn lot_with_free(free: &[&str]) -> LotScenario {
    let mut s = replica_scenario();
    for slot in &mut s.slots {
        slot.occupied = !free.contains(&slot.id.as_str());
    }
    s
}

pub fn agent_cfg(id: &str, seed: u64) -> AgentConfig {
    AgentConfig::new(id, MethodConfig::new(MethodVariant::Integrated), seed)
}

pub const FLEET_SLOTS: [&str; 3] = ["C3", "C5", "C6"];

/// Three vehicles: slots requested one after another, then driven concurrently.
pub fn fleet<T: Transport + Send>(scenario: &LotScenario, mut transports: Vec<T>) -> Vec<AgentRun> {
    let mut pending = Vec::new();
    for (i, t) in transports.iter_mut().enumerate() {
        let mut agent = VehicleAgent::new(scenario, agent_cfg(&format!("V{}", i + 1), 10 + i as u64)).unwrap();
        let a = agent.request(t).unwrap();
        pending.push((agent, a));
    }
    thread::scope(|s| {
        let handles: Vec<_> = pending
            .into_iter()
            .zip(transports)
            .map(|((agent, a), mut t)| s.spawn(move || agent.drive(&mut t, a)))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    })
}

pub fn fleet_in_process(scenario: &LotScenario) -> (ServerState, Vec<AgentRun>) {
    let (mut hub, rx) = in_process();
    let transports: Vec<_> = (0..3).map(|_| hub.connect()).collect();
    drop(hub);
    let s = scenario.clone();
    let server = thread::spawn(move || run_server(ServerState::new(s), &ServerConfig::default(), rx, None));
    let runs = fleet(scenario, transports);
    (server.join().unwrap(), runs)
}

pub fn fleet_tcp(scenario: &LotScenario) -> (ServerState, Vec<AgentRun>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = mpsc::channel();
    spawn_tcp_listener(listener, tx);
    let s = scenario.clone();
    let server = thread::spawn(move || run_server(ServerState::new(s), &ServerConfig::default(), rx, Some(3)));
    let transports: Vec<_> = (0..3).map(|_| TcpTransport::connect(addr).unwrap()).collect();
    let runs = fleet(scenario, transports);
    (server.join().unwrap(), runs)
}
