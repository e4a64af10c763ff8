//! The `queuenet` command line: scenario ingestion, command dispatch, and
//! report emission.
//!
//! Three subcommands map onto the three planning questions: `predict`
//! forecasts congestion minute by minute under fixed shares, `equilibrium`
//! finds the share vector consistent with the waits it induces, and
//! `optimize` searches toll triples minimizing the worst stranded count at
//! that equilibrium. Every run writes its CSV artifact plus a fully resolved
//! copy of the scenario next to it, so a report can always be traced back to
//! the exact inputs that produced it.

use crate::choice::TollScheme;
use crate::equilibrium;
use crate::error::{Error, Result};
use crate::network;
use crate::scenario::{load_scenario, Scenario};
use crate::tollopt;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "queuenet", version, about = "Airport ground-access queueing forecasts")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Forecast congestion over the horizon under fixed mode shares.
    Predict(RunArgs),
    /// Solve the share equilibrium and write the iteration trace.
    Equilibrium(RunArgs),
    /// Search queue-toll triples minimizing the worst stranded count.
    Optimize(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file.
    pub scenario: PathBuf,
    /// Override the look-ahead in minutes (forecast horizon, or the
    /// equilibrium evaluation horizon for the solver commands).
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Override the solver seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for artifacts (default: current directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the transient-solver step in minutes.
    #[arg(long)]
    pub dt: Option<f64>,
}

/// Outcome summary printed after a successful run.
#[derive(Debug)]
pub struct RunReport {
    pub command: &'static str,
    pub scenario_name: String,
    pub scenario_path: PathBuf,
    pub seed: u64,
    pub headline: Vec<(String, String)>,
    pub artifacts: Vec<PathBuf>,
    pub wall_seconds: f64,
}

impl RunReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{} on {} ({})\n",
            self.command,
            self.scenario_name,
            self.scenario_path.display()
        ));
        out.push_str(&format!("seed: {}\n", self.seed));
        for (key, value) in &self.headline {
            out.push_str(&format!("{key}: {value}\n"));
        }
        for artifact in &self.artifacts {
            out.push_str(&format!("wrote {}\n", artifact.display()));
        }
        out.push_str(&format!("wall time: {:.2} s\n", self.wall_seconds));
        out
    }
}

/// The subsystem a failure belongs to, for the exit message.
pub fn module_of(err: &Error) -> &'static str {
    match err {
        Error::TimeOutOfProfile { .. } => "rates",
        Error::Instability { .. } => "ctmc",
        Error::UndefinedWait { chain, .. } => match chain.as_str() {
            "taxi" => "taxi",
            "subway" => "subway",
            _ => "network",
        },
        Error::Invalid { .. } | Error::Scenario { .. } => "scenario",
        Error::Io(_) | Error::Csv { .. } => "cli",
    }
}

pub fn run(cli: &Cli) -> Result<RunReport> {
    let (name, args) = match &cli.command {
        Command::Predict(a) => ("predict", a),
        Command::Equilibrium(a) => ("equilibrium", a),
        Command::Optimize(a) => ("optimize", a),
    };
    let started = Instant::now();

    let mut scenario = load_scenario(&args.scenario)?;
    apply_overrides(&mut scenario, name, args)?;
    log::info!(
        "loaded scenario '{}' (horizon {} min, dt {}, seed {})",
        scenario.name,
        scenario.horizon.minutes,
        scenario.solver.dt,
        scenario.solver.seed
    );

    let out_dir = args.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;
    let stem = args
        .scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| scenario.name.clone());
    let tag = format!("{name}_{stem}_{}", scenario.solver.seed);

    let (headline, csv_path) = match name {
        "predict" => cmd_predict(&scenario, &out_dir, &tag)?,
        "equilibrium" => cmd_equilibrium(&scenario, &out_dir, &tag)?,
        _ => cmd_optimize(&scenario, &out_dir, &tag)?,
    };

    // Echo the fully resolved configuration: no defaults left implicit.
    let resolved = out_dir.join(format!("{tag}_resolved.toml"));
    scenario.save(&resolved)?;

    Ok(RunReport {
        command: name,
        scenario_name: scenario.name.clone(),
        scenario_path: args.scenario.clone(),
        seed: scenario.solver.seed,
        headline,
        artifacts: vec![csv_path, resolved],
        wall_seconds: started.elapsed().as_secs_f64(),
    })
}

fn apply_overrides(scenario: &mut Scenario, command: &str, args: &RunArgs) -> Result<()> {
    if let Some(dt) = args.dt {
        scenario.solver.dt = dt;
    }
    if let Some(seed) = args.seed {
        scenario.solver.seed = seed;
    }
    if let Some(h) = args.horizon {
        if command == "predict" {
            scenario.horizon.minutes = h;
        } else {
            scenario.solver.mswa.t_e = h;
        }
    }
    scenario.validate()
}

/// Minute-by-minute congestion forecast under the baseline shares.
fn cmd_predict(
    scenario: &Scenario,
    out_dir: &Path,
    tag: &str,
) -> Result<(Vec<(String, String)>, PathBuf)> {
    let shares = network::baseline_shares(scenario, &TollScheme::ZERO);
    let mut state = network::initial_state(scenario)?;
    let t_end = scenario.horizon.t0 + scenario.horizon.minutes;

    let mut rows = vec![network::report_now(&state, &shares, scenario)?];
    while t_end - state.t > 1e-9 {
        let step = (t_end - state.t).min(1.0);
        let (next, report) = network::predict(&state, &shares, scenario, step)?;
        rows.push(report);
        state = next;
    }

    let csv_path = out_dir.join(format!("{tag}.csv"));
    let mut file = std::fs::File::create(&csv_path)?;
    network::write_report_csv(&mut file, &rows)?;

    let peak = rows
        .iter()
        .max_by(|a, b| a.l_max.total_cmp(&b.l_max))
        .expect("at least the initial row");
    let last = rows.last().expect("at least the initial row");
    let headline = vec![
        (
            "shares (taxi/bus/subway)".into(),
            format!("{:.4} / {:.4} / {:.4}", shares.taxi, shares.bus, shares.subway),
        ),
        ("peak L_max".into(), format!("{:.2} at t = {:.0} min", peak.l_max, peak.t)),
        (
            format!("final t = {:.0} min", last.t),
            format!("L_max {:.2}, W_mean {:.2} min", last.l_max, last.w_mean),
        ),
    ];
    Ok((headline, csv_path))
}

/// Share equilibrium trace under zero tolls.
fn cmd_equilibrium(
    scenario: &Scenario,
    out_dir: &Path,
    tag: &str,
) -> Result<(Vec<(String, String)>, PathBuf)> {
    let initial = network::initial_state(scenario)?;
    let outcome = equilibrium::mswa_solve(
        &initial,
        scenario,
        &TollScheme::ZERO,
        &scenario.solver.mswa,
    )?;

    let csv_path = out_dir.join(format!("{tag}.csv"));
    let mut file = std::fs::File::create(&csv_path)?;
    outcome.trace.write_csv(&mut file)?;

    let last = outcome.trace.rows.last().expect("trace is never empty");
    let headline = vec![
        (
            "status".into(),
            if outcome.trace.converged {
                format!("converged in {} iterations (error {:.3e})", last.iter, last.error)
            } else {
                format!("stopped at iteration {} (best error {:.3e})", last.iter, last.error)
            },
        ),
        (
            "equilibrium shares".into(),
            format!(
                "{:.4} / {:.4} / {:.4}",
                outcome.shares.taxi,
                outcome.shares.bus,
                outcome.shares.subway
            ),
        ),
        (
            "waits (min)".into(),
            format!(
                "taxi {:.2}, bus {:.2}, subway {:.2}",
                outcome.report.w_x, outcome.report.w_b, outcome.report.w_s
            ),
        ),
        (
            format!("criteria at t = {:.0} min", outcome.report.t),
            format!("L_max {:.2}, W_mean {:.2} min", outcome.report.l_max, outcome.report.w_mean),
        ),
    ];
    Ok((headline, csv_path))
}

/// Toll search over the equilibrium objective.
fn cmd_optimize(
    scenario: &Scenario,
    out_dir: &Path,
    tag: &str,
) -> Result<(Vec<(String, String)>, PathBuf)> {
    let initial = network::initial_state(scenario)?;
    let outcome = tollopt::alo_optimize(
        scenario,
        &initial,
        &scenario.solver.alo,
        &scenario.solver.mswa,
    )?;

    let csv_path = out_dir.join(format!("{tag}.csv"));
    let mut file = std::fs::File::create(&csv_path)?;
    outcome.write_history_csv(&mut file)?;

    let first = outcome.history.first().expect("history is never empty");
    let j = outcome.tolls.as_array();
    let headline = vec![
        (
            "elite tolls (taxi/bus/subway)".into(),
            format!("{:.4} / {:.4} / {:.4}", j[0], j[1], j[2]),
        ),
        (
            "objective L_max".into(),
            format!("{:.2} (started {:.2})", outcome.eval.objective, first.objective),
        ),
        (
            "equilibrium shares under elite tolls".into(),
            format!(
                "{:.4} / {:.4} / {:.4}",
                outcome.eval.shares.taxi,
                outcome.eval.shares.bus,
                outcome.eval.shares.subway
            ),
        ),
    ];
    Ok((headline, csv_path))
}
