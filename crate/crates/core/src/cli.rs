//! Command-line front end for the `bnsa` binary.
//!
//! Five subcommands cover the workflow: `analyze` tabulates the one-way
//! metrics of every parameter for a query, `pairs` ranks parameter pairs by
//! joint sensitivity, `admissible` reports the interval each parameter may
//! move in without changing the most likely target state, `validate` checks
//! a network file, and `bench` times the pipeline on generated networks.
//!
//! Reports go to standard output as CSV (default) or JSON carrying exactly
//! the same fields; timings and diagnostics go to standard error. Numbers
//! are rounded to 6 significant digits unless `--precision` says otherwise;
//! missing values print as `NA` (JSON `null`) and infinities as `inf`.
//! Exit codes are stable: 0 success, 2 unreadable or invalid network, 3 bad
//! usage or query, 4 zero-probability evidence, 5 too few parameters for a
//! pair, 6 non-binary target for `admissible`, 7 queried state not most
//! likely.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::bif;
use crate::engine::{self, Heuristic};
use crate::gen::{self, GenSpec};
use crate::model::{BayesianNetwork, Evidence, Query};
use crate::multiway::{self, MultiwayError};
use crate::oneway::{self, AnalysisError, SortKey};

#[derive(Debug, Parser)]
#[command(name = "bnsa", version, about = "Exact sensitivity analysis for discrete Bayesian networks")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// One-way sensitivity metrics for every parameter.
    Analyze(QueryArgs),
    /// Most influential parameter pairs by joint sensitivity.
    Pairs(QueryArgs),
    /// Per-parameter intervals that keep the queried state most likely.
    Admissible(QueryArgs),
    /// Parse and validate a network file.
    Validate(ValidateArgs),
    /// Time the pipeline on generated networks.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct QueryArgs {
    /// Network file in BIF format.
    network: PathBuf,
    /// Query target, written VAR=state.
    #[arg(long)]
    target: String,
    /// Evidence, written VAR=state; repeat or separate with commas.
    #[arg(long, value_delimiter = ',')]
    evidence: Vec<String>,
    /// Keep only the first N report rows.
    #[arg(long, default_value_t = 20)]
    top: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Sort key for analyze: parameter, value, sensitivity_value,
    /// vertex_proximity, second_derivative, or max_first_derivative.
    #[arg(long, default_value = "sensitivity_value")]
    sort_by: String,
    /// Significant digits in the output, 1 to 17.
    #[arg(long, default_value_t = 6)]
    precision: usize,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    network: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 6)]
    precision: usize,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Benchmark an existing network instead of generated ones.
    #[arg(long)]
    network: Option<PathBuf>,
    /// Seed for network generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Node counts of the generated networks.
    #[arg(long, value_delimiter = ',', default_values_t = [10usize, 20, 40])]
    nodes: Vec<usize>,
    /// States per variable in generated networks.
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Each generated variable is conditioned on the previous N.
    #[arg(long, default_value_t = 2)]
    window: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[arg(long, default_value_t = 6)]
    precision: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Network(String),
    #[error("{0}")]
    Usage(String),
    #[error("evidence has probability zero under the current parameters")]
    ZeroEvidence,
    #[error("need at least two parameters from different table rows")]
    TooFewParameters,
    #[error("admissible regions need a binary target; variable has {0} states")]
    NonBinaryTarget(usize),
    #[error("queried state is not currently most likely (probability {0:.6})")]
    NotMostLikely(f64),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Network(_) => 2,
            CliError::Usage(_) => 3,
            CliError::ZeroEvidence => 4,
            CliError::TooFewParameters => 5,
            CliError::NonBinaryTarget(_) => 6,
            CliError::NotMostLikely(_) => 7,
        }
    }
}

/// Binary entry point: parses arguments, runs the command, maps errors to
/// exit codes without stack traces.
pub fn main_entry() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(3);
        }
        Err(help_or_version) => {
            let _ = help_or_version.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    match cli.command {
        Command::Analyze(args) => cmd_analyze(&args, started),
        Command::Pairs(args) => cmd_pairs(&args, started),
        Command::Admissible(args) => cmd_admissible(&args, started),
        Command::Validate(args) => cmd_validate(&args, started),
        Command::Bench(args) => cmd_bench(&args, started),
    }
}

fn load_network(path: &Path) -> Result<BayesianNetwork, CliError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Network(format!("cannot read {}: {e}", path.display())))?;
    let doc = bif::parse_bif(&source)
        .map_err(|e| CliError::Network(format!("{}: {e}", path.display())))?;
    doc.to_network()
        .map_err(|e| CliError::Network(format!("{}: {e}", path.display())))
}

/// Parses `VAR=state` against the network's names.
fn parse_assignment(bn: &BayesianNetwork, spec: &str) -> Result<(usize, usize), CliError> {
    let (var, state) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("assignment {spec:?} is not of the form VAR=state")))?;
    let (var, state) = (var.trim(), state.trim());
    let v = bn
        .variable_index(var)
        .ok_or_else(|| CliError::Usage(format!("network has no variable named {var}")))?;
    let s = bn
        .state_index(v, state)
        .ok_or_else(|| CliError::Usage(format!("variable {var} has no state named {state}")))?;
    Ok((v, s))
}

fn build_query(bn: &BayesianNetwork, args: &QueryArgs) -> Result<Query, CliError> {
    let target = parse_assignment(bn, &args.target)?;
    let mut evidence = Evidence::new();
    for spec in &args.evidence {
        let (v, s) = parse_assignment(bn, spec)?;
        if v == target.0 {
            return Err(CliError::Usage(format!(
                "target variable {} also appears in the evidence",
                bn.variables[v].name
            )));
        }
        if evidence.contains(v) {
            return Err(CliError::Usage(format!(
                "evidence assigns variable {} twice",
                bn.variables[v].name
            )));
        }
        evidence.set(v, s);
    }
    Query::new(target, evidence)
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn check_common(args: &QueryArgs) -> Result<(), CliError> {
    if args.top == 0 {
        return Err(CliError::Usage("--top must be at least 1".into()));
    }
    check_precision(args.precision)
}

fn check_precision(precision: usize) -> Result<(), CliError> {
    if !(1..=17).contains(&precision) {
        return Err(CliError::Usage("--precision must be between 1 and 17".into()));
    }
    Ok(())
}

fn map_analysis_error(e: AnalysisError) -> CliError {
    match e {
        AnalysisError::ZeroEvidenceProbability => CliError::ZeroEvidence,
        AnalysisError::NonBinaryTarget { cardinality } => CliError::NonBinaryTarget(cardinality),
        AnalysisError::NotMostLikely { share } => CliError::NotMostLikely(share),
        AnalysisError::Model(e) => CliError::Network(e.to_string()),
    }
}

fn cmd_analyze(args: &QueryArgs, started: Instant) -> Result<(), CliError> {
    check_common(args)?;
    let sort = SortKey::parse(&args.sort_by)
        .ok_or_else(|| CliError::Usage(format!("unknown sort key {}", args.sort_by)))?;
    let bn = load_network(&args.network)?;
    let query = build_query(&bn, args)?;
    let mut reports = oneway::analyze(&bn, &query).map_err(map_analysis_error)?;
    oneway::sort_reports(&mut reports, sort);

    let in_set = reports
        .iter()
        .filter(|r| r.analysis.as_ref().is_some_and(|a| a.in_sensitivity_set))
        .count();
    let total = reports.len();
    reports.truncate(args.top);

    let mut table = Table::new(&[
        "parameter",
        "value",
        "sensitivity_value",
        "vertex_proximity",
        "second_derivative",
        "max_first_derivative",
        "monotone_sign",
        "in_sensitivity_set",
    ]);
    for r in &reports {
        let name = bn.describe_parameter(r.parameter);
        match &r.analysis {
            Some(a) => table.row(vec![
                Cell::Text(name),
                Cell::Num(Some(r.value)),
                Cell::Num(Some(a.metrics.sensitivity_value)),
                Cell::Num(a.metrics.vertex_proximity),
                Cell::Num(Some(a.metrics.second_derivative)),
                Cell::Num(Some(a.metrics.max_first_derivative)),
                Cell::Int(a.metrics.monotone_sign as i64),
                Cell::Bool(a.in_sensitivity_set),
            ]),
            None => table.row(vec![
                Cell::Text(name),
                Cell::Num(Some(r.value)),
                Cell::Num(None),
                Cell::Num(None),
                Cell::Num(None),
                Cell::Num(None),
                Cell::Num(None),
                Cell::Bool(false),
            ]),
        }
    }
    table.emit(args.format, args.precision)?;
    eprintln!(
        "analyzed {total} parameters ({in_set} in the sensitivity set) in {:.1} ms",
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_pairs(args: &QueryArgs, started: Instant) -> Result<(), CliError> {
    check_common(args)?;
    let bn = load_network(&args.network)?;
    let query = build_query(&bn, args)?;
    let map = oneway::sensitivity_coefficients(&bn, &query).map_err(map_analysis_error)?;
    let coeffs = map.eligible();
    let pairs = multiway::top_k_pairs(&coeffs, args.top, map.evidence_probability).map_err(|e| match e {
        MultiwayError::InsufficientParameters => CliError::TooFewParameters,
        MultiwayError::ZeroEvidenceProbability => CliError::ZeroEvidence,
        other => CliError::Usage(other.to_string()),
    })?;

    let mut table = Table::new(&["parameter_i", "parameter_j", "sv_max"]);
    for p in &pairs {
        table.row(vec![
            Cell::Text(bn.describe_parameter(p.first)),
            Cell::Text(bn.describe_parameter(p.second)),
            Cell::Num(Some(p.sv_max)),
        ]);
    }
    table.emit(args.format, args.precision)?;
    eprintln!(
        "scored pairs over {} eligible parameters in {:.1} ms",
        coeffs.len(),
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_admissible(args: &QueryArgs, started: Instant) -> Result<(), CliError> {
    check_common(args)?;
    let bn = load_network(&args.network)?;
    let query = build_query(&bn, args)?;
    let cardinality = bn.cardinality(query.target.0);
    if cardinality != 2 {
        return Err(CliError::NonBinaryTarget(cardinality));
    }
    let reports = oneway::analyze(&bn, &query).map_err(map_analysis_error)?;
    let value = reports
        .iter()
        .find_map(|r| r.analysis.as_ref())
        .map(|a| a.function.evaluate(a.function.theta0));
    if let Some(v) = value {
        if v <= 0.5 {
            return Err(CliError::NotMostLikely(v));
        }
    }

    // Keep analyzable rows, order by how little the parameter may move.
    let mut rows: Vec<_> = reports
        .iter()
        .filter_map(|r| r.analysis.as_ref().map(|a| (r, a, a.admissible_region.expect("regions exist for a binary most-likely target"))))
        .collect();
    rows.sort_by(|a, b| {
        a.2.width()
            .partial_cmp(&b.2.width())
            .expect("widths are finite")
            .then_with(|| a.0.parameter.cmp(&b.0.parameter))
    });
    rows.truncate(args.top);

    let mut table = Table::new(&[
        "parameter",
        "value",
        "sensitivity_value",
        "vertex_proximity",
        "ar_lower",
        "ar_upper",
    ]);
    for (r, a, region) in &rows {
        table.row(vec![
            Cell::Text(bn.describe_parameter(r.parameter)),
            Cell::Num(Some(r.value)),
            Cell::Num(Some(a.metrics.sensitivity_value)),
            Cell::Num(a.metrics.vertex_proximity),
            Cell::Num(Some(region.lower)),
            Cell::Num(Some(region.upper)),
        ]);
    }
    table.emit(args.format, args.precision)?;
    eprintln!(
        "bounded {} parameters in {:.1} ms",
        rows.len(),
        started.elapsed().as_secs_f64() * 1e3
    );
    Ok(())
}

fn cmd_validate(args: &ValidateArgs, started: Instant) -> Result<(), CliError> {
    check_precision(args.precision)?;
    let bn = load_network(&args.network)?;
    let mrf = bn.moralize();
    let order = engine::elimination_order(&mrf, Heuristic::MinFill);
    let (width, _) = engine::elimination_stats(&mrf, &order);

    let mut table = Table::new(&["network", "variables", "parameters", "induced_width"]);
    table.row(vec![
        Cell::Text(bn.name.clone()),
        Cell::Int(bn.n_variables() as i64),
        Cell::Int(bn.n_parameters() as i64),
        Cell::Int(width as i64),
    ]);
    table.emit(args.format, args.precision)?;
    eprintln!("validated in {:.1} ms", started.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

/// Milliseconds of wall time for one run of `f`.
fn time_ms<T>(f: impl FnOnce() -> T) -> (f64, T) {
    let t = Instant::now();
    let out = f();
    (t.elapsed().as_secs_f64() * 1e3, out)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).expect("timings are finite"));
    xs[xs.len() / 2]
}

fn cmd_bench(args: &BenchArgs, started: Instant) -> Result<(), CliError> {
    check_precision(args.precision)?;
    let mut subjects: Vec<(String, BayesianNetwork)> = Vec::new();
    if let Some(path) = &args.network {
        let name = path.file_stem().map_or_else(|| "network".into(), |s| s.to_string_lossy().into_owned());
        subjects.push((name, load_network(path)?));
    } else {
        for (i, &nodes) in args.nodes.iter().enumerate() {
            let bn = gen::random_network(
                &GenSpec::banded(nodes, args.states, args.window),
                args.seed.wrapping_add(i as u64),
            );
            subjects.push((format!("banded-{nodes}"), bn));
        }
    }

    let mut table = Table::new(&[
        "network",
        "variables",
        "parameters",
        "induced_width",
        "forward_ms",
        "forward_backward_ms",
        "analyze_ms",
        "pairs_ms",
        "backward_forward_ratio",
    ]);
    for (name, bn) in &subjects {
        // Conditional query from the far end of the DAG back to a root state
        // so both analysis passes have real work to do.
        let target = (bn.n_variables() - 1, 0);
        let evidence = Evidence::from_pairs([(0, 0)]);
        let query = Query::new(target, evidence.clone()).map_err(|e| CliError::Usage(e.to_string()))?;

        let masked = bn
            .moralize()
            .impose_evidence(&evidence)
            .map_err(|e| CliError::Network(e.to_string()))?;
        let order = engine::elimination_order(&masked, Heuristic::MinFill);
        let (width, _) = engine::elimination_stats(&masked, &order);

        let reps = 5;
        let mut forward = Vec::with_capacity(reps);
        let mut both = Vec::with_capacity(reps);
        for _ in 0..reps {
            let (ms, (_, tape)) = time_ms(|| engine::marginalize(&masked, &order));
            forward.push(ms);
            let (back_ms, _) = time_ms(|| engine::backward(&tape));
            both.push(ms + back_ms);
        }
        let forward = median(forward);
        let both = median(both);

        let (analyze_ms, analyzed) = time_ms(|| oneway::analyze(bn, &query));
        analyzed.map_err(map_analysis_error)?;
        let (pairs_ms, paired) = time_ms(|| {
            let map = oneway::sensitivity_coefficients(bn, &query).map_err(map_analysis_error)?;
            multiway::top_k_pairs(&map.eligible(), 20, map.evidence_probability)
                .map_err(|e| CliError::Usage(e.to_string()))
        });
        paired?;

        table.row(vec![
            Cell::Text(name.clone()),
            Cell::Int(bn.n_variables() as i64),
            Cell::Int(bn.n_parameters() as i64),
            Cell::Int(width as i64),
            Cell::Num(Some(forward)),
            Cell::Num(Some(both)),
            Cell::Num(Some(analyze_ms)),
            Cell::Num(Some(pairs_ms)),
            Cell::Num(Some((both - forward).max(0.0) / forward)),
        ]);
    }
    table.emit(args.format, args.precision)?;
    eprintln!("benchmarked {} networks in {:.1} ms", subjects.len(), started.elapsed().as_secs_f64() * 1e3);
    Ok(())
}

/// One output cell; rendering rules are shared by the CSV and JSON paths so
/// both formats carry identical data.
enum Cell {
    Text(String),
    /// `None` renders as `NA` in CSV and `null` in JSON.
    Num(Option<f64>),
    Int(i64),
    Bool(bool),
}

struct Table {
    columns: Vec<&'static str>,
    rows: Vec<Vec<Cell>>,
}

/// Rounds to `sig` significant digits by a decimal round trip, so CSV and
/// JSON print the same value.
fn round_sig(v: f64, sig: usize) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.*e}", sig - 1).parse().expect("formatted floats re-parse")
}

impl Table {
    fn new(columns: &[&'static str]) -> Table {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    fn row(&mut self, cells: Vec<Cell>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    fn emit(&self, format: Format, precision: usize) -> Result<(), CliError> {
        let stdout = std::io::stdout();
        let result = match format {
            Format::Csv => self.emit_csv(stdout.lock(), precision),
            Format::Json => self.emit_json(stdout.lock(), precision),
        };
        result.map_err(|e| CliError::Network(format!("cannot write report: {e}")))
    }

    fn emit_csv(&self, out: impl Write, precision: usize) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            let rendered: Vec<String> = row
                .iter()
                .map(|cell| match cell {
                    Cell::Text(s) => s.clone(),
                    Cell::Num(None) => "NA".into(),
                    Cell::Num(Some(v)) if v.is_infinite() => "inf".into(),
                    Cell::Num(Some(v)) => round_sig(*v, precision).to_string(),
                    Cell::Int(i) => i.to_string(),
                    Cell::Bool(b) => b.to_string(),
                })
                .collect();
            w.write_record(&rendered)?;
        }
        w.flush()
    }

    fn emit_json(&self, mut out: impl Write, precision: usize) -> std::io::Result<()> {
        let mut array = Vec::with_capacity(self.rows.len());
        for row in &self.rows {
            let mut object = serde_json::Map::with_capacity(self.columns.len());
            for (name, cell) in self.columns.iter().zip(row) {
                let value = match cell {
                    Cell::Text(s) => serde_json::Value::String(s.clone()),
                    Cell::Num(None) => serde_json::Value::Null,
                    Cell::Num(Some(v)) if v.is_infinite() => serde_json::Value::String("inf".into()),
                    Cell::Num(Some(v)) => serde_json::Number::from_f64(round_sig(*v, precision))
                        .map_or(serde_json::Value::Null, serde_json::Value::Number),
                    Cell::Int(i) => serde_json::Value::Number((*i).into()),
                    Cell::Bool(b) => serde_json::Value::Bool(*b),
                };
                object.insert((*name).to_string(), value);
            }
            array.push(serde_json::Value::Object(object));
        }
        writeln!(out, "{}", serde_json::Value::Array(array))
    }
}

impl Display for Format {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Format::Csv => "csv",
            Format::Json => "json",
        })
    }
}
