//! Method comparison harness: single closed-loop experiments, the
//! four-method table and the trajectory metrics behind it.

mod metrics;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metrics::{dtw_alignment, dtw_normalized, euclidean_errors, polyline_distance};

use crate::control::{track, EstimatorKind, JumpInjection, SimPlant, TrackConfig, TrajectoryLog, VehicleLimits};
use crate::geometry::{wrap_angle, Point2, Polygon, Pose2D};
use crate::guidance::{build_context, guide, Backend, GuidanceResult, GuidanceWeights, LlmEndpoint};
use crate::localization::LocalizerConfig;
use crate::planner::{plan_route, PlannedRoute, PlannerConfig, ReferenceTrajectory};
use crate::sensor::NoiseProfile;
use crate::world::{
    default_inflation, extract_candidate_nodes, rasterize, LotScenario, OccupancyGrid, WorldError,
    DEFAULT_VEHICLE_WIDTH,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("empty input sequence")]
    EmptyInput,
    #[error("no seeds given")]
    NoSeeds,
    #[error(transparent)]
    Scenario(#[from] WorldError),
}

/// Localization and control pipeline under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodVariant {
    /// Smoothed multilateration fixes straight into a fixed-weight controller.
    RawUwb,
    /// Fusion filter with the innovation gate disabled.
    UwbEkf,
    /// Gated fusion filter, fixed controller weights.
    UwbIaekf,
    /// Gated fusion filter with reliability-scheduled weights.
    Integrated,
}

impl MethodVariant {
    pub const ALL: [MethodVariant; 4] = [Self::RawUwb, Self::UwbEkf, Self::UwbIaekf, Self::Integrated];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::RawUwb => "raw-uwb",
            Self::UwbEkf => "uwb-ekf",
            Self::UwbIaekf => "uwb-iaekf",
            Self::Integrated => "integrated",
        }
    }

    pub fn table_label(self) -> &'static str {
        match self {
            Self::RawUwb => "UWB",
            Self::UwbEkf => "UWB+EKF",
            Self::UwbIaekf => "UWB+IAEKF",
            Self::Integrated => "Integrated Improvement",
        }
    }

    pub fn estimator(self) -> EstimatorKind {
        match self {
            Self::RawUwb => EstimatorKind::RawUwb,
            _ => EstimatorKind::Fused,
        }
    }

    pub fn localizer_config(self) -> LocalizerConfig {
        match self {
            Self::UwbEkf => LocalizerConfig::default().ungated(),
            _ => LocalizerConfig::default(),
        }
    }

    pub fn adaptive(self) -> bool {
        self == Self::Integrated
    }
}

impl fmt::Display for MethodVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for MethodVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}` (expected raw-uwb, uwb-ekf, uwb-iaekf or integrated)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodConfig {
    pub variant: MethodVariant,
    pub guidance: Backend,
    pub llm: Option<LlmEndpoint>,
    /// Replaces the scenario's noise profile when set.
    pub noise: Option<NoiseProfile>,
    pub jump: Option<JumpInjection>,
    pub planner: PlannerConfig,
    /// `adaptive` is overridden by the variant.
    pub track: TrackConfig,
    pub limits: VehicleLimits,
}

impl MethodConfig {
    pub fn new(variant: MethodVariant) -> Self {
        Self {
            variant,
            guidance: Backend::Heuristic,
            llm: None,
            noise: None,
            jump: None,
            planner: PlannerConfig::default(),
            track: TrackConfig::default(),
            limits: VehicleLimits::default(),
        }
    }

    pub fn with_noise(mut self, noise: NoiseProfile) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn track_config(&self) -> TrackConfig {
        TrackConfig { adaptive: self.variant.adaptive(), ..self.track }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: MethodVariant,
    pub scenario: String,
    pub seed: u64,
    pub slot_id: String,
    /// Tracking finished and settled before the timeout.
    pub success: bool,
    pub euclidean_max: f64,
    pub euclidean_mean: f64,
    pub dtw_normalized_mean: f64,
    pub terminal_position_error: f64,
    /// Offset across the terminal heading axis, meters.
    pub terminal_lateral_error: f64,
    /// Absolute heading error at the end, radians.
    pub terminal_heading_error: f64,
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

impl MetricsReport {
    pub fn parked_within(&self, lateral: f64, heading: f64) -> bool {
        self.success && self.terminal_lateral_error <= lateral && self.terminal_heading_error <= heading
    }

    fn failed(method: MethodVariant, scenario: &str, seed: u64, reason: String) -> Self {
        Self {
            method,
            scenario: scenario.to_string(),
            seed,
            slot_id: String::new(),
            success: false,
            euclidean_max: 0.0,
            euclidean_mean: 0.0,
            dtw_normalized_mean: 0.0,
            terminal_position_error: 0.0,
            terminal_lateral_error: 0.0,
            terminal_heading_error: 0.0,
            elapsed: 0.0,
            failure: Some(reason),
        }
    }
}

/// Metrics of an executed true-pose log against a reference.
pub fn evaluate(log: &TrajectoryLog, reference: &ReferenceTrajectory) -> Result<(f64, f64, f64), BenchError> {
    let executed = log.true_positions();
    let reference = reference.points();
    let (max, mean) = euclidean_errors(&executed, &reference)?;
    let dtw = dtw_normalized(&executed, &reference)?;
    Ok((max, mean, dtw))
}

/// The bundled benchmark lot: 30.2 × 37.9 m with an invented aisle and
/// slot layout.
pub const REPLICA_SCENARIO: &str = include_str!("../../data/replica_lot.scn");

pub fn replica_scenario() -> LotScenario {
    let mut s = crate::world::load_scenario(REPLICA_SCENARIO).expect("bundled scenario is valid");
    s.name = "replica_lot".into();
    s
}

/// Grid the planner and guidance run on: fixed obstacles, parked vehicles
/// in occupied slots and the lot perimeter, inflated for the reference vehicle.
pub fn planning_grid(scenario: &LotScenario) -> OccupancyGrid {
    let mut s = scenario.clone();
    for slot in scenario.slots.iter().filter(|s| s.occupied) {
        let (u, n) = (slot.axis() * (0.5 * slot.length), slot.axis().perp() * (0.5 * slot.width));
        let c = slot.center;
        s.obstacles.push(Polygon(vec![c - u - n, c + u - n, c + u + n, c - u + n]));
    }
    let (lo, hi) = (scenario.bounds.min, scenario.bounds.max);
    let t = 0.1;
    for (a, b) in [
        (Point2::new(lo.x - t, lo.y - t), Point2::new(hi.x + t, lo.y)),
        (Point2::new(lo.x - t, hi.y), Point2::new(hi.x + t, hi.y + t)),
        (Point2::new(lo.x - t, lo.y), Point2::new(lo.x, hi.y)),
        (Point2::new(hi.x, lo.y), Point2::new(hi.x + t, hi.y)),
    ] {
        s.obstacles.push(Polygon(vec![a, Point2::new(b.x, a.y), b, Point2::new(a.x, b.y)]));
    }
    rasterize(&s, default_inflation(DEFAULT_VEHICLE_WIDTH))
}

/// Guidance and planning from the entry pose; independent of the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedRoute {
    pub guidance: GuidanceResult,
    pub route: PlannedRoute,
}

pub fn prepare_route(
    scenario: &LotScenario,
    grid: &OccupancyGrid,
    method: &MethodConfig,
) -> Result<PreparedRoute, String> {
    let nodes = extract_candidate_nodes(grid, scenario);
    let start = scenario.entry_pose;
    let ctx = build_context(scenario, &nodes, start, 0.0);
    let guidance = guide(&ctx, grid, method.guidance, method.llm.as_ref(), &GuidanceWeights::default())
        .map_err(|e| format!("guidance: {e}"))?;
    let route = plan_route(scenario, grid, start, &guidance.slot_id, &guidance.waypoints, &method.planner)
        .map_err(|e| format!("planning: {e}"))?;
    Ok(PreparedRoute { guidance, route })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRun {
    pub report: MetricsReport,
    pub log: TrajectoryLog,
    pub prepared: Option<PreparedRoute>,
    /// Noise-stream digest over a fixed prefix; equal across methods for a seed.
    pub stream_digest: Option<u64>,
}

/// One guidance, planning and tracking run. Planning or tracking failures
/// come back as `success = false`, not as errors.
pub fn run_experiment(scenario: &LotScenario, method: &MethodConfig, seed: u64) -> Result<ExperimentRun, BenchError> {
    let mut scenario = scenario.clone();
    if let Some(noise) = &method.noise {
        scenario.noise = noise.clone();
    }
    scenario.validate()?;
    let grid = planning_grid(&scenario);
    let prepared = prepare_route(&scenario, &grid, method);
    Ok(run_prepared(&scenario, prepared, method, seed))
}

/// Tracks an already planned route. `scenario` must carry the noise profile to use.
pub fn run_prepared(
    scenario: &LotScenario,
    prepared: Result<PreparedRoute, String>,
    method: &MethodConfig,
    seed: u64,
) -> ExperimentRun {
    let variant = method.variant;
    let prepared = match prepared {
        Ok(p) => p,
        Err(reason) => {
            return ExperimentRun {
                report: MetricsReport::failed(variant, &scenario.name, seed, reason),
                log: TrajectoryLog::default(),
                prepared: None,
                stream_digest: None,
            }
        }
    };
    let fail = |reason: String, log: TrajectoryLog, digest| ExperimentRun {
        report: MetricsReport {
            slot_id: prepared.route.slot_id.clone(),
            ..MetricsReport::failed(variant, &scenario.name, seed, reason)
        },
        log,
        prepared: Some(prepared.clone()),
        stream_digest: digest,
    };
    let plant = SimPlant::new(
        scenario,
        scenario.entry_pose,
        seed,
        variant.estimator(),
        variant.localizer_config(),
        method.limits,
        method.jump,
    );
    let mut plant = match plant {
        Ok(p) => p,
        Err(e) => return fail(format!("plant: {e}"), TrajectoryLog::default(), None),
    };
    let reference = &prepared.route.trajectory;
    let outcome = match track(reference, &mut plant, &method.track_config(), None) {
        Ok(o) => o,
        Err(e) => return fail(format!("tracking: {e}"), TrajectoryLog::default(), plant.stream_prefix_digest()),
    };
    let digest = plant.stream_prefix_digest();
    let (max, mean, dtw) = match evaluate(&outcome.log, reference) {
        Ok(m) => m,
        Err(e) => return fail(format!("metrics: {e}"), outcome.log, digest),
    };
    let target = reference.terminal();
    let (lat, head) = terminal_errors(outcome.final_true_pose, target);
    let report = MetricsReport {
        method: variant,
        scenario: scenario.name.clone(),
        seed,
        slot_id: prepared.route.slot_id.clone(),
        success: outcome.succeeded(),
        euclidean_max: max,
        euclidean_mean: mean,
        dtw_normalized_mean: dtw,
        terminal_position_error: outcome.final_true_pose.position().distance(target.position()),
        terminal_lateral_error: lat,
        terminal_heading_error: head,
        elapsed: outcome.elapsed,
        failure: (!outcome.succeeded()).then(|| "tracking timed out".to_string()),
    };
    ExperimentRun { report, log: outcome.log, prepared: Some(prepared), stream_digest: digest }
}

/// Lateral offset from the target heading axis and absolute heading error.
pub fn terminal_errors(actual: Pose2D, target: Pose2D) -> (f64, f64) {
    let lat = target.heading().cross(actual.position() - target.position()).abs();
    (lat, wrap_angle(actual.theta - target.theta).abs())
}

/// Per-method aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: MethodVariant,
    pub label: String,
    pub euclidean_max: f64,
    pub euclidean_mean: f64,
    pub dtw_normalized_mean: f64,
    pub successes: usize,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    /// Mean Euclidean error per method, in [`MethodVariant::ALL`] order.
    pub euclidean_mean: [f64; 4],
    /// integrated < uwb-iaekf < uwb-ekf < raw-uwb on the mean error.
    pub ordered: bool,
    pub streams_match: bool,
}

/// Reference values reported for the real vehicle: (label, max, mean, DTW).
/// Shown next to simulated results for context only.
pub const REAL_WORLD_REFERENCE: [(&str, f64, f64, f64); 4] = [
    ("UWB", 2.354, 0.240, 0.284),
    ("UWB+EKF", 1.692, 0.190, 0.212),
    ("UWB+IAEKF", 0.653, 0.138, 0.169),
    ("Integrated Improvement", 0.517, 0.118, 0.133),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<MethodRow>,
    pub per_seed: Vec<SeedRecord>,
    pub reports: Vec<MetricsReport>,
}

fn strictly_decreasing(v: [f64; 4]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

impl ComparisonTable {
    /// Share of seeds whose mean errors follow the expected ordering.
    pub fn ordering_fraction(&self) -> f64 {
        let n = self.per_seed.iter().filter(|s| s.ordered).count();
        n as f64 / self.per_seed.len().max(1) as f64
    }

    /// Whether aggregated (max, mean, DTW) each follow the ordering.
    pub fn aggregate_ordering(&self) -> [bool; 3] {
        let col = |f: fn(&MethodRow) -> f64| {
            let mut v = [0.0; 4];
            for (i, r) in self.rows.iter().enumerate().take(4) {
                v[i] = f(r);
            }
            strictly_decreasing(v)
        };
        [col(|r| r.euclidean_max), col(|r| r.euclidean_mean), col(|r| r.dtw_normalized_mean)]
    }

    pub fn all_succeeded(&self) -> bool {
        self.reports.iter().all(|r| r.success)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["method", "euclidean_max", "euclidean_mean", "dtw_normalized_mean", "successes", "runs"])?;
        for r in &self.rows {
            wr.write_record([
                r.label.clone(),
                format!("{:.4}", r.euclidean_max),
                format!("{:.4}", r.euclidean_mean),
                format!("{:.4}", r.dtw_normalized_mean),
                r.successes.to_string(),
                r.runs.to_string(),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

impl fmt::Display for ComparisonTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "scenario {} over {} seeds", self.scenario, self.seeds.len())?;
        writeln!(f, "{:<24} {:>9} {:>9} {:>9}   {:>21}", "method", "max (m)", "mean (m)", "DTW (m)", "real vehicle max/mean/DTW")?;
        for (r, (_, pmax, pmean, pdtw)) in self.rows.iter().zip(REAL_WORLD_REFERENCE) {
            writeln!(
                f,
                "{:<24} {:>9.3} {:>9.3} {:>9.3}   {:>7.3}/{:.3}/{:.3}",
                r.label, r.euclidean_max, r.euclidean_mean, r.dtw_normalized_mean, pmax, pmean, pdtw
            )?;
        }
        let [a, b, c] = self.aggregate_ordering();
        writeln!(
            f,
            "per-seed ordering holds in {:.0}% of seeds; aggregate ordering max {a} mean {b} dtw {c}",
            100.0 * self.ordering_fraction()
        )
    }
}

/// Runs all four methods per seed on the scenario's own noise profile.
/// Seeds are spread over the worker pool when `parallel` is set.
pub fn compare_with(scenario: &LotScenario, seeds: &[u64], parallel: bool) -> Result<ComparisonTable, BenchError> {
    if seeds.is_empty() {
        return Err(BenchError::NoSeeds);
    }
    scenario.validate()?;
    let grid = planning_grid(scenario);
    let configs: Vec<MethodConfig> = MethodVariant::ALL.into_iter().map(MethodConfig::new).collect();
    // Guidance and planning do not depend on the method or the seed.
    let prepared = prepare_route(scenario, &grid, &configs[0]);
    let per_seed: Vec<Vec<ExperimentRun>> = crate::parallel::map_with(seeds, parallel, |&seed| {
        configs
            .iter()
            .map(|m| run_prepared(scenario, prepared.clone(), m, seed))
            .collect()
    });

    let mut rows: Vec<MethodRow> = MethodVariant::ALL
        .into_iter()
        .map(|m| MethodRow {
            method: m,
            label: m.table_label().to_string(),
            euclidean_max: 0.0,
            euclidean_mean: 0.0,
            dtw_normalized_mean: 0.0,
            successes: 0,
            runs: 0,
        })
        .collect();
    let mut records = Vec::with_capacity(seeds.len());
    let mut reports = Vec::with_capacity(seeds.len() * 4);
    for (&seed, runs) in seeds.iter().zip(&per_seed) {
        let mut means = [0.0; 4];
        for (i, run) in runs.iter().enumerate() {
            let r = &run.report;
            means[i] = r.euclidean_mean;
            let row = &mut rows[i];
            row.euclidean_max += r.euclidean_max;
            row.euclidean_mean += r.euclidean_mean;
            row.dtw_normalized_mean += r.dtw_normalized_mean;
            row.successes += usize::from(r.success);
            row.runs += 1;
            reports.push(r.clone());
        }
        let d0 = runs[0].stream_digest;
        records.push(SeedRecord {
            seed,
            euclidean_mean: means,
            ordered: strictly_decreasing(means),
            streams_match: d0.is_some() && runs.iter().all(|r| r.stream_digest == d0),
        });
    }
    let n = seeds.len() as f64;
    for r in &mut rows {
        r.euclidean_max /= n;
        r.euclidean_mean /= n;
        r.dtw_normalized_mean /= n;
    }
    Ok(ComparisonTable { scenario: scenario.name.clone(), seeds: seeds.to_vec(), rows, per_seed: records, reports })
}

pub fn compare(scenario: &LotScenario, seeds: &[u64]) -> Result<ComparisonTable, BenchError> {
    compare_with(scenario, seeds, true)
}
