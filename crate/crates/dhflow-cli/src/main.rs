//! Command-line interface: solve single operating points, sweep valve
//! grids, run group ramp studies, and verify the monotonicity properties
//! on randomized networks.
//!
//! Exit codes: 0 on success, 1 on solver or property failure, 2 on input
//! errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use dhflow_cli::format::{parse_network_path, ParseError, ParseOptions, ParsedNetwork};
use dhflow_cli::report::{counterexample_to_json, render_campaign_summary};
use dhflow_cli::table::{group_table, solution_table, sweep_table, Table};
use dhflow_core::{
    run_group_scenario, run_property_campaign, run_sweep, solve_newton, solve_tree, GroupScenario,
    PropertyCampaignSpec, QuantitySelection, RampSpec, ScenarioError, SettingsError, SolverConfig,
    SolverError, SweepSpec, ValveSettings, VertexId,
};

#[derive(Parser)]
#[command(
    name = "dhflow",
    version,
    about = "Steady-state hydraulics of tree-structured district heating networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    /// Monotone tree decomposition (the primary solver).
    Tree,
    /// Damped Newton on the stacked residuals (independent cross-check).
    Newton,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one operating point and print the equilibrium as CSV.
    Solve {
        /// Network file (JSON).
        #[arg(long)]
        network: PathBuf,
        /// Valve openings, e.g. "1=1,2=0.5"; must cover every leaf.
        #[arg(long)]
        valves: String,
        /// Override the pump pressure stored in the network file.
        #[arg(long)]
        pump_pressure: Option<f64>,
        /// Write the CSV here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Tree)]
        method: Method,
        /// Residual tolerance (the flow tolerance scales along).
        #[arg(long)]
        tolerance: Option<f64>,
        /// Accept unknown keys in the network file with a warning.
        #[arg(long)]
        lax: bool,
    },
    /// Sweep valve-position grids and print one CSV row per grid point.
    Sweep {
        #[arg(long)]
        network: PathBuf,
        /// Swept leaves, e.g. "1=0.1:1.0:0.1,2=0.1:1.0:0.1".
        #[arg(long)]
        range: String,
        /// Fixed openings for the remaining leaves, e.g. "3=0.5".
        #[arg(long)]
        fixed: Option<String>,
        /// Comma list of: total, per-consumer, pressures.
        #[arg(long)]
        quantities: String,
        #[arg(long)]
        pump_pressure: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        lax: bool,
    },
    /// Ramp the valves of selected consumer groups and tabulate flows.
    Group {
        #[arg(long)]
        network: PathBuf,
        /// Group definitions, e.g. "group1=1,2,3;group2=4,5".
        #[arg(long)]
        groups: String,
        /// Names of the groups that open along the ramp.
        #[arg(long)]
        open: String,
        /// Ramp as start:end:steps, e.g. "0.3:1.0:15".
        #[arg(long)]
        ramp: String,
        /// Opening held by the non-ramping groups.
        #[arg(long)]
        fixed_u: f64,
        #[arg(long)]
        pump_pressure: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        lax: bool,
    },
    /// Verify the monotonicity properties on randomized networks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        cases: u32,
        #[arg(long, default_value_t = 50)]
        max_vertices: u32,
        /// Which properties to check: 1 (total flow), 2 (fixed consumer).
        #[arg(long, default_value = "1,2")]
        parts: String,
        /// Where to write the reproduction bundle on failure.
        #[arg(long)]
        bundle: Option<PathBuf>,
    },
}

enum CliError {
    Input(String),
    Run(String),
}

impl CliError {
    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Run(m) => m,
        }
    }

    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl From<ParseError> for CliError {
    fn from(e: ParseError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SettingsError> for CliError {
    fn from(e: SettingsError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::BadConfig { .. }
            | SolverError::ValveCoverage { .. }
            | SolverError::NonFinitePressure { .. } => CliError::Input(e.to_string()),
            _ => CliError::Run(e.to_string()),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        match e {
            ScenarioError::InvalidSpec { .. }
            | ScenarioError::GridTooLarge { .. }
            | ScenarioError::Settings(_) => CliError::Input(e.to_string()),
            other => CliError::Run(other.to_string()),
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.code());
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Solve {
            network,
            valves,
            pump_pressure,
            out,
            method,
            tolerance,
            lax,
        } => {
            let parsed = load_network(&network, lax)?;
            let net = parsed.network;
            let settings = ValveSettings::new(&net, parse_valves(&valves)?)?;
            warn_above_normal(&settings);
            let cfg = config_with_tolerance(tolerance)?;
            let p0 = pump_pressure.unwrap_or_else(|| net.pump_pressure());
            let solution = match method {
                Method::Tree => solve_tree(&net, p0, &settings, &cfg)?,
                Method::Newton => solve_newton(&net, p0, &settings, &cfg)?,
            };
            emit(&solution_table(&solution), out.as_deref())
        }
        Command::Sweep {
            network,
            range,
            fixed,
            quantities,
            pump_pressure,
            out,
            tolerance,
            lax,
        } => {
            let parsed = load_network(&network, lax)?;
            let net = parsed.network;
            let selection = parse_quantities(&quantities)?;
            let p0 = pump_pressure.unwrap_or_else(|| net.pump_pressure());
            let mut spec = SweepSpec::new(&net, p0);
            spec.quantities = selection;
            spec.config = config_with_tolerance(tolerance)?;
            for (id, (min, max, step)) in parse_ranges(&range)? {
                spec = spec.sweep(id, min, max, step);
            }
            if let Some(fixed) = fixed {
                for (id, u) in parse_valves(&fixed)? {
                    spec = spec.fixed(id, u);
                }
            }
            let result = run_sweep(&spec)?;
            emit(&sweep_table(&net, &result, selection), out.as_deref())
        }
        Command::Group {
            network,
            groups,
            open,
            ramp,
            fixed_u,
            pump_pressure,
            out,
            lax,
        } => {
            let parsed = load_network(&network, lax)?;
            let net = parsed.network;
            let p0 = pump_pressure.unwrap_or_else(|| net.pump_pressure());
            let scenario = GroupScenario {
                network: &net,
                pump_pressure: p0,
                groups: parse_groups(&groups)?,
                opening: open
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect(),
                ramp: parse_ramp(&ramp)?,
                fixed_opening: fixed_u,
                config: SolverConfig::default(),
            };
            let study = run_group_scenario(&scenario)?;
            emit(&group_table(&study), out.as_deref())
        }
        Command::Verify {
            seed,
            cases,
            max_vertices,
            parts,
            bundle,
        } => {
            let (part1, part2) = parse_parts(&parts)?;
            let spec = PropertyCampaignSpec::new(seed, cases)
                .with_max_vertices(max_vertices)
                .parts(part1, part2);
            match run_property_campaign(&spec) {
                Ok(report) => {
                    print!("{}", render_campaign_summary(&report));
                    Ok(())
                }
                Err(ScenarioError::CampaignFailed {
                    report,
                    counterexample,
                }) => {
                    print!("{}", render_campaign_summary(&report));
                    let path = bundle.unwrap_or_else(|| {
                        PathBuf::from(format!(
                            "dhflow-counterexample-seed{}-case{}.json",
                            seed, counterexample.index
                        ))
                    });
                    std::fs::write(&path, counterexample_to_json(&counterexample)).map_err(
                        |e| CliError::Run(format!("cannot write {}: {e}", path.display())),
                    )?;
                    println!("reproduction bundle written to {}", path.display());
                    Err(CliError::Run(format!(
                        "{} case(s) violated the monotonicity properties",
                        report.failures
                    )))
                }
                Err(other) => Err(other.into()),
            }
        }
    }
}

fn load_network(path: &Path, lax: bool) -> Result<ParsedNetwork, CliError> {
    let parsed = parse_network_path(path, ParseOptions { lax })?;
    for warning in &parsed.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(parsed)
}

fn warn_above_normal(settings: &ValveSettings) {
    for id in settings.above_normal_range() {
        eprintln!("warning: valve opening for leaf {id} is above 1 (outside the normal operating range)");
    }
}

fn config_with_tolerance(tolerance: Option<f64>) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::default();
    if let Some(t) = tolerance {
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Input(format!("tolerance must be positive, got {t}")));
        }
        cfg.residual_tolerance = t;
        cfg.flow_tolerance = t / 10.0;
    }
    Ok(cfg)
}

fn emit(table: &Table, out: Option<&Path>) -> Result<(), CliError> {
    let csv = table.to_csv();
    match out {
        Some(path) => std::fs::write(path, csv)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn parse_id(text: &str) -> Result<VertexId, CliError> {
    text.trim()
        .parse::<u32>()
        .map(VertexId)
        .map_err(|_| CliError::Input(format!("\"{text}\" is not a vertex id")))
}

fn parse_f64(text: &str, what: &str) -> Result<f64, CliError> {
    text.trim()
        .parse::<f64>()
        .map_err(|_| CliError::Input(format!("\"{text}\" is not a number ({what})")))
}

/// "1=1,2=0.5" -> {1: 1.0, 2: 0.5}
fn parse_valves(text: &str) -> Result<BTreeMap<VertexId, f64>, CliError> {
    let mut map = BTreeMap::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected leaf=opening, got \"{item}\"")))?;
        map.insert(parse_id(id)?, parse_f64(value, "valve opening")?);
    }
    if map.is_empty() {
        return Err(CliError::Input("no valve openings given".into()));
    }
    Ok(map)
}

/// "1=0.1:1.0:0.1,2=0.2:0.8:0.2" -> per-leaf (min, max, step)
fn parse_ranges(text: &str) -> Result<Vec<(VertexId, (f64, f64, f64))>, CliError> {
    let mut ranges = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (id, spec) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected leaf=min:max:step, got \"{item}\"")))?;
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Input(format!(
                "expected min:max:step for leaf {id}, got \"{spec}\""
            )));
        }
        ranges.push((
            parse_id(id)?,
            (
                parse_f64(parts[0], "range min")?,
                parse_f64(parts[1], "range max")?,
                parse_f64(parts[2], "range step")?,
            ),
        ));
    }
    if ranges.is_empty() {
        return Err(CliError::Input("no sweep ranges given".into()));
    }
    Ok(ranges)
}

/// "group1=1,2,3;group2=4,5"
fn parse_groups(text: &str) -> Result<Vec<(String, Vec<VertexId>)>, CliError> {
    let mut groups = Vec::new();
    for item in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, members) = item
            .split_once('=')
            .ok_or_else(|| CliError::Input(format!("expected name=leaf,leaf,..., got \"{item}\"")))?;
        let ids = members
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_id)
            .collect::<Result<Vec<_>, _>>()?;
        groups.push((name.trim().to_string(), ids));
    }
    if groups.is_empty() {
        return Err(CliError::Input("no groups given".into()));
    }
    Ok(groups)
}

/// "0.3:1.0:15"
fn parse_ramp(text: &str) -> Result<RampSpec, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Input(format!(
            "expected start:end:steps, got \"{text}\""
        )));
    }
    let steps = parts[2]
        .trim()
        .parse::<u32>()
        .map_err(|_| CliError::Input(format!("\"{}\" is not a step count", parts[2])))?;
    Ok(RampSpec {
        start: parse_f64(parts[0], "ramp start")?,
        end: parse_f64(parts[1], "ramp end")?,
        steps,
    })
}

/// "total,per-consumer,pressures"
fn parse_quantities(text: &str) -> Result<QuantitySelection, CliError> {
    let mut selection = QuantitySelection {
        total: false,
        per_consumer: false,
        pressures: false,
    };
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "total" => selection.total = true,
            "per-consumer" => selection.per_consumer = true,
            "pressures" => selection.pressures = true,
            other => {
                return Err(CliError::Input(format!(
                    "unknown quantity \"{other}\" (expected total, per-consumer or pressures)"
                )))
            }
        }
    }
    if !(selection.total || selection.per_consumer || selection.pressures) {
        return Err(CliError::Input("no output quantities selected".into()));
    }
    Ok(selection)
}

/// "1,2" -> (check part 1, check part 2)
fn parse_parts(text: &str) -> Result<(bool, bool), CliError> {
    let mut part1 = false;
    let mut part2 = false;
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match item {
            "1" => part1 = true,
            "2" => part2 = true,
            other => {
                return Err(CliError::Input(format!(
                    "unknown part \"{other}\" (expected 1 and/or 2)"
                )))
            }
        }
    }
    if !(part1 || part2) {
        return Err(CliError::Input("no parts selected".into()));
    }
    Ok((part1, part2))
}
