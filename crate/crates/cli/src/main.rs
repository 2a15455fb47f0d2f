use std::fs::{self, File};
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::mpsc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use upark::bench::{
    compare_with, dtw_normalized, euclidean_errors, planning_grid, prepare_route, replica_scenario, run_experiment,
    terminal_errors, MethodConfig, MethodVariant,
};
use upark::coordination::{
    run_server, spawn_tcp_listener, vehicle_agent, AgentConfig, ServerConfig, ServerState, SessionPhase, TcpTransport,
    DEFAULT_PORT,
};
use upark::guidance::{Backend, LlmEndpoint};
use upark::sensor::NoiseProfile;
use upark::world::load_scenario_file;
use upark::{LotScenario, Point2, Pose2D};

#[derive(Parser)]
#[command(name = "upark", version, about = "UWB-localized valet parking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Guidance {
    Heuristic,
    Llm,
}

#[derive(clap::Args)]
struct ScenarioArg {
    /// Scenario file; the bundled lot when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl ScenarioArg {
    fn load(&self) -> Result<LotScenario> {
        match &self.scenario {
            Some(p) => load_scenario_file(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(replica_scenario()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Plan and track one run, writing the report and logs.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "integrated")]
        method: MethodVariant,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, value_enum, default_value = "heuristic")]
        guidance: Guidance,
        /// Replace the scenario noise with perfect sensors.
        #[arg(long)]
        noise_free: bool,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Guidance and planning only; writes the reference trajectory.
    Plan {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value = "heuristic")]
        guidance: Guidance,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run all four methods over seeds 1..=N.
    Compare {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Full table with per-seed reports as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute metrics from a tracking log and a reference trajectory.
    Metrics {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Slot-assignment server.
    Serve {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_enum, default_value = "heuristic")]
        guidance: Guidance,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Exit after this many sessions have finished.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// One simulated vehicle talking to a server.
    Vehicle {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, default_value = "127.0.0.1:7788")]
        connect: String,
        #[arg(long, default_value = "V1")]
        id: String,
        #[arg(long, default_value = "integrated")]
        method: MethodVariant,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn backend(g: Guidance) -> (Backend, Option<LlmEndpoint>) {
    match g {
        Guidance::Heuristic => (Backend::Heuristic, None),
        Guidance::Llm => (Backend::Llm, LlmEndpoint::from_env()),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Named numeric columns of a CSV file.
fn read_columns(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = rd.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| headers.iter().position(|h| h == *n).with_context(|| format!("{}: no column `{n}`", path.display())))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        rows.push(idx.iter().map(|&i| rec[i].parse::<f64>()).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(rows)
}

fn simulate(
    scenario: LotScenario,
    method: MethodVariant,
    seed: u64,
    guidance: Guidance,
    noise_free: bool,
    out: &Path,
) -> Result<bool> {
    let mut m = MethodConfig::new(method);
    (m.guidance, m.llm) = backend(guidance);
    if noise_free {
        m = m.with_noise(NoiseProfile::zero());
    }
    let run = run_experiment(&scenario, &m, seed)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("report.json"), &run.report)?;
    run.log.write_csv(create(&out.join("log.csv"))?)?;
    if let Some(p) = &run.prepared {
        p.route.trajectory.write_csv(create(&out.join("reference.csv"))?)?;
        write_json(&out.join("guidance.json"), &p.guidance)?;
    }
    let r = &run.report;
    println!(
        "{} seed {} slot {}: success {}, max {:.3} m, mean {:.3} m, DTW {:.3} m, terminal {:.3} m / {:.1} deg, {:.1} s",
        r.method,
        r.seed,
        r.slot_id,
        r.success,
        r.euclidean_max,
        r.euclidean_mean,
        r.dtw_normalized_mean,
        r.terminal_lateral_error,
        r.terminal_heading_error.to_degrees(),
        r.elapsed
    );
    if let Some(f) = &r.failure {
        println!("failure: {f}");
    }
    Ok(r.success)
}

fn plan(scenario: LotScenario, guidance: Guidance, out: Option<&Path>) -> Result<bool> {
    let mut m = MethodConfig::new(MethodVariant::Integrated);
    (m.guidance, m.llm) = backend(guidance);
    let grid = planning_grid(&scenario);
    let p = match prepare_route(&scenario, &grid, &m) {
        Ok(p) => p,
        Err(e) => {
            println!("planning failed: {e}");
            return Ok(false);
        }
    };
    let r = &p.route;
    println!(
        "slot {} via {:?} ({} waypoints); path {:.2} m, search cost {:.2} m with {} expansions ({} unguided), duration {:.1} s",
        r.slot_id,
        p.guidance.backend,
        p.guidance.waypoints.len(),
        r.length(),
        r.stats.guided_cost,
        r.stats.guided_expanded,
        r.stats.plain_expanded,
        r.trajectory.duration()
    );
    if let Some(out) = out {
        r.trajectory.write_csv(create(out)?)?;
    }
    Ok(true)
}

fn metrics(log: &Path, reference: &Path) -> Result<bool> {
    let exec = read_columns(log, &["true_x", "true_y", "true_theta"])?;
    let refs = read_columns(reference, &["x", "y", "theta"])?;
    if exec.is_empty() || refs.is_empty() {
        bail!("empty log or reference");
    }
    let pts = |rows: &[Vec<f64>]| rows.iter().map(|r| Point2::new(r[0], r[1])).collect::<Vec<_>>();
    let (e, r) = (pts(&exec), pts(&refs));
    let (max, mean) = euclidean_errors(&e, &r)?;
    let dtw = dtw_normalized(&e, &r)?;
    let (a, b) = (exec.last().unwrap(), refs.last().unwrap());
    let (lat, head) = terminal_errors(Pose2D::new(a[0], a[1], a[2]), Pose2D::new(b[0], b[1], b[2]));
    let summary = serde_json::json!({
        "euclidean_max": max,
        "euclidean_mean": mean,
        "dtw_normalized_mean": dtw,
        "terminal_lateral_error": lat,
        "terminal_heading_error": head,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(true)
}

fn run() -> Result<bool> {
    let cli = Cli::parse();
    match cli.command {
        Command::Simulate { scenario, method, seed, guidance, noise_free, out } => {
            simulate(scenario.load()?, method, seed, guidance, noise_free, &out)
        }
        Command::Plan { scenario, guidance, out } => plan(scenario.load()?, guidance, out.as_deref()),
        Command::Compare { scenario, seeds, out, json, sequential } => {
            if seeds == 0 {
                bail!("--seeds must be at least 1");
            }
            let seeds: Vec<u64> = (1..=seeds).collect();
            let table = compare_with(&scenario.load()?, &seeds, !sequential)?;
            print!("{table}");
            if let Some(out) = out {
                table.write_csv(create(&out)?)?;
            }
            if let Some(json) = json {
                write_json(&json, &table)?;
            }
            Ok(table.all_succeeded())
        }
        Command::Metrics { log, reference } => metrics(&log, &reference),
        Command::Serve { scenario, guidance, port, bind, sessions } => {
            let scenario = scenario.load()?;
            let (guidance, llm) = backend(guidance);
            let cfg = ServerConfig { guidance, llm, ..ServerConfig::default() };
            let listener = TcpListener::bind((bind.as_str(), port)).with_context(|| format!("binding {bind}:{port}"))?;
            info!("listening on {}", listener.local_addr()?);
            let (tx, rx) = mpsc::channel();
            spawn_tcp_listener(listener, tx);
            let state = run_server(ServerState::new(scenario), &cfg, rx, sessions);
            for (id, s) in &state.sessions {
                println!("session {id} {}: {:?} slot {}", s.vehicle_id, s.state, s.slot_id.as_deref().unwrap_or("-"));
            }
            Ok(state.sessions.values().all(|s| s.state == upark::coordination::SessionState::Done))
        }
        Command::Vehicle { scenario, connect, id, method, seed } => {
            let scenario = scenario.load()?;
            let mut t = TcpTransport::connect(connect.as_str()).with_context(|| format!("connecting to {connect}"))?;
            let run = vehicle_agent(&scenario, AgentConfig::new(id, MethodConfig::new(method), seed), &mut t)?;
            println!(
                "{} session {} slot {}: {:?}, {} pose reports{}",
                run.vehicle_id,
                run.session_id,
                run.slot_id,
                run.phase,
                run.reports_sent,
                run.error.as_deref().map(|e| format!(" ({e})")).unwrap_or_default()
            );
            if let Some(m) = run.metrics {
                println!("{}", serde_json::to_string(&m)?);
            }
            Ok(run.phase == SessionPhase::Done)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
