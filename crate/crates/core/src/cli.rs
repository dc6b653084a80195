//! Command-line pipelines: simulate, estimate, fit, evaluate, ingest, sweep.
//!
//! Every output carries the master seed and a SHA-256 hash of the effective
//! configuration (parameters plus the content of every input file), and
//! reruns with the same inputs are byte-identical. Argument errors exit with
//! status 1, numerical failures with status 2; both print a JSON object on
//! stderr and write no files.

use std::ffi::OsString;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::{HawkesError, Result};
use crate::events::EventStream;
use crate::kernel::{KernelMatrix, KernelSpec};
use crate::market::{self, VolumeBinning};
use crate::metrics::{causality_report, convergence_study, error_report};
use crate::norms::{baseline_from_rates, branching_ratio, l1_norms, NormMatrix};
use crate::presets::preset;
use crate::quadrature::QuadratureGrid;
use crate::simulate::{simulate, simulate_events, SimConfig};
use crate::solver::{
    default_table_times, fit, fitted_norms, fitted_spec, goodness_of_fit, solver_quadrature, RowModel, TrainConfig,
};
use crate::stats::{estimate_with_bootstrap, GridConfig, SecondOrderStats};
use crate::wiener_hopf::{wh_solve, WhSolution};

#[derive(Debug, Parser)]
#[command(name = "neural-hawkes", version, about = "Non-parametric marked Hawkes kernel estimation")]
pub struct Cli {
    /// Cap on worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a marked Hawkes process into an event CSV (or a trade CSV).
    Simulate(SimulateArgs),
    /// Estimate first- and second-order statistics of an event CSV.
    Stats(StatsArgs),
    /// Fit the kernel matrix with one neural network per row.
    FitNeural(FitNeuralArgs),
    /// Fit the kernel matrix with the Wiener-Hopf quadrature solver.
    FitWh(FitWhArgs),
    /// Tabulate a fitted or analytic kernel on a time grid.
    Eval(EvalArgs),
    /// Error metrics against a known kernel and causality ratios.
    Metrics(MetricsArgs),
    /// Turn a `timestamp_us,pair,volume_usd` trade CSV into an event CSV.
    Ingest(IngestArgs),
    /// Refit over a list of values of one training hyperparameter.
    Sweep(SweepArgs),
    /// Error decay with the sample size over several seeds.
    Convergence(ConvergenceArgs),
}

/// Where a kernel spec comes from.
#[derive(Debug, Args, Clone)]
pub struct SpecSource {
    /// Kernel spec JSON file.
    #[arg(long, conflicts_with = "preset")]
    pub spec: Option<PathBuf>,
    /// Built-in experiment: benchmark, exponential-4d, power-law, delayed-exponential,
    /// inhibition, non-multiplicative, convergence-exponential, convergence-power-law.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: SpecSource,
    /// Simulation horizon in seconds.
    #[arg(long, conflicts_with = "events")]
    pub horizon: Option<f64>,
    /// Target event count; the horizon becomes N / ΣΛ.
    #[arg(long)]
    pub events: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub max_events: Option<usize>,
    /// Write trade prints instead of events, one pair name per component (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub trade_pairs: Vec<String>,
    /// Mean of ln(volume) for trade prints.
    #[arg(long, default_value_t = 6.0)]
    pub log_volume_mean: f64,
    /// Standard deviation of ln(volume) for trade prints.
    #[arg(long, default_value_t = 2.0)]
    pub log_volume_sd: f64,
    /// Session start of trade prints, microseconds since the epoch.
    #[arg(long, default_value_t = 1_672_531_200_000_000)]
    pub session_start_us: i64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Statistics grid, from a preset, a JSON file or explicit flags.
#[derive(Debug, Args, Clone)]
pub struct GridArgs {
    /// Grid JSON: {"kind":"mixed","h":..,"n_lin":..,"n_log":..,"horizon":..} or {"kind":"uniform","n":..,"horizon":..}.
    #[arg(long)]
    pub grid: Option<PathBuf>,
    /// Use the grid of a built-in experiment.
    #[arg(long)]
    pub grid_preset: Option<String>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub n_lin: Option<usize>,
    #[arg(long)]
    pub n_log: Option<usize>,
    /// Number of equal bins, for a uniform grid.
    #[arg(long)]
    pub uniform: Option<usize>,
    /// Largest lag T.
    #[arg(long)]
    pub max_lag: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Bootstrap replicates for standard errors (0 disables).
    #[arg(long, default_value_t = 0)]
    pub bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV; the sidecar goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

/// Training configuration: a JSON file plus flag overrides.
#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    /// Training configuration JSON (missing fields take defaults).
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub dgm_cells: Option<usize>,
    #[arg(long)]
    pub quadrature_nodes: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub training_size: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitNeuralArgs {
    /// Statistics CSV written by `stats` (its `.json` sidecar must sit next to it).
    #[arg(long)]
    pub stats: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Resimulate this many events from the fit to check the rates (0 skips).
    #[arg(long, default_value_t = 0)]
    pub check_events: usize,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitWhArgs {
    #[arg(long)]
    pub stats: PathBuf,
    /// Uniform quadrature nodes on [0, T], both ends included.
    #[arg(long, default_value_t = 200)]
    pub nodes: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// A kernel to evaluate: a fit (with its statistics) or an analytic spec.
#[derive(Debug, Args, Clone)]
pub struct KernelArgs {
    /// Neural fit directory or Wiener-Hopf solution JSON.
    #[arg(long, conflicts_with_all = ["spec", "preset"])]
    pub fit: Option<PathBuf>,
    #[command(flatten)]
    pub source: SpecSource,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub kernel: KernelArgs,
    /// Statistics the fit came from (required for Wiener-Hopf fits).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    /// Explicit evaluation times (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub times: Vec<f64>,
    /// Otherwise K + 1 uniform times on [0, T].
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    /// Upper end T of the uniform times (defaults to the statistics horizon).
    #[arg(long)]
    pub max_lag: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Neural fit directory or Wiener-Hopf solution JSON.
    #[arg(long)]
    pub fit: PathBuf,
    /// Statistics the fit came from (rates, marks and horizon).
    #[arg(long)]
    pub stats: PathBuf,
    /// Reference kernel for error metrics.
    #[command(flatten)]
    pub truth: SpecSource,
    /// Error grid size K (K + 1 nodes).
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    /// Traded volume per component, for participation ratios (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub volumes: Vec<f64>,
    /// Output JSON; per-cell errors also go to `<out>.cells.csv`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub trades: PathBuf,
    /// Pairs to keep, one component each (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub pairs: Vec<String>,
    /// Volume bin edges JSON array (USD); defaults to a 15-mark log grid.
    #[arg(long, conflicts_with = "unmarked")]
    pub edges: Option<PathBuf>,
    /// Ignore volumes: a single mark.
    #[arg(long)]
    pub unmarked: bool,
    /// Session start in microseconds (defaults to the UTC midnight before the first trade).
    #[arg(long)]
    pub session_start_us: Option<i64>,
    #[arg(long)]
    pub session_end_us: Option<i64>,
    /// Daily UTC window `HH:MM-HH:MM`, closed at the start and open at the end.
    #[arg(long)]
    pub window: Option<String>,
    /// Also write an intraday rate profile CSV with bins of this many minutes.
    #[arg(long)]
    pub profile_minutes: Option<f64>,
    /// Output event CSV; the ingest summary goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub stats: PathBuf,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Training-config field to vary, e.g. neurons, dgm_cells, training_size, batch_size.
    #[arg(long)]
    pub param: String,
    /// Values of the field (comma separated JSON scalars).
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    /// Optional reference kernel for error columns.
    #[command(flatten)]
    pub truth: SpecSource,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[command(flatten)]
    pub source: SpecSource,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Event counts (comma separated, non-decreasing).
    #[arg(long, value_delimiter = ',', required = true)]
    pub events: Vec<usize>,
    /// Seeds per event count (comma separated).
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3])]
    pub seeds: Vec<u64>,
    #[arg(long, default_value_t = 1000)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

/// Failure reported by [`run`]: exit status plus a message.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CliError {
    pub exit_code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn argument(message: impl Into<String>) -> Self {
        Self { exit_code: 1, kind: "argument", message: message.into() }
    }

    pub fn to_json(&self) -> String {
        json!({ "error": self }).to_string()
    }
}

impl From<HawkesError> for CliError {
    fn from(e: HawkesError) -> Self {
        if e.is_argument_error() {
            Self { exit_code: 1, kind: "argument", message: e.to_string() }
        } else {
            Self { exit_code: 2, kind: "numerical", message: e.to_string() }
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first) and runs the command. Help and version
/// requests print to stdout and succeed.
pub fn run<I, T>(args: I) -> CliResult<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return Ok(());
        }
        Err(e) => return Err(CliError::argument(e.render().to_string().trim().to_string())),
    };
    match cli.jobs {
        Some(0) => return Err(CliError::argument("--jobs must be >= 1")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(|e| CliError::argument(e.to_string()))?;
            pool.install(|| dispatch(cli.command))
        }
        None => dispatch(cli.command),
    }
}

/// Runs [`run`] on the process arguments and returns the exit status.
pub fn main_exit_code() -> i32 {
    match run(std::env::args_os()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Stats(a) => cmd_stats(a),
        Command::FitNeural(a) => cmd_fit_neural(a),
        Command::FitWh(a) => cmd_fit_wh(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Ingest(a) => cmd_ingest(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Convergence(a) => cmd_convergence(a),
    }
}

/// Effective configuration of one command, hashed into its outputs.
struct Provenance {
    command: &'static str,
    seed: u64,
    params: Value,
    inputs: Vec<(String, String)>,
}

impl Provenance {
    fn new(command: &'static str, seed: u64, params: Value) -> Self {
        Self { command, seed, params, inputs: Vec::new() }
    }

    /// Reads an input file and records its digest under `role`.
    fn read(&mut self, role: &str, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| CliError::argument(format!("{}: {e}", path.display())))?;
        self.inputs.push((role.to_string(), hex::encode(Sha256::digest(&bytes))));
        Ok(bytes)
    }

    fn hash(&self) -> String {
        let doc = json!({
            "command": self.command,
            "seed": self.seed,
            "params": self.params,
            "inputs": self.inputs,
        });
        hex::encode(Sha256::digest(doc.to_string().as_bytes()))
    }

    fn pairs(&self) -> Vec<(String, String)> {
        vec![
            ("command".into(), self.command.into()),
            ("seed".into(), self.seed.to_string()),
            ("config_hash".into(), self.hash()),
        ]
    }

    fn json(&self) -> Value {
        json!({ "command": self.command, "seed": self.seed, "config_hash": self.hash(), "params": self.params })
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::argument(format!("{}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::argument(format!("{}: {e}", path.display())))
}

fn pretty(v: &Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s.into_bytes()
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn csv_header(prov: &Provenance) -> String {
    prov.pairs().iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

fn parse_json<T: serde::de::DeserializeOwned>(bytes: &[u8], what: &str) -> CliResult<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::argument(format!("{what}: {e}")))
}

fn load_spec(source: &SpecSource, prov: &mut Provenance) -> CliResult<Option<KernelSpec>> {
    match (&source.spec, &source.preset) {
        (Some(path), None) => {
            let bytes = prov.read("spec", path)?;
            let s = std::str::from_utf8(&bytes).map_err(|_| CliError::argument("spec file is not UTF-8"))?;
            Ok(Some(KernelSpec::from_json(s)?))
        }
        (None, Some(name)) => Ok(Some(preset(name)?.spec)),
        (None, None) => Ok(None),
        (Some(_), Some(_)) => Err(CliError::argument("give either --spec or --preset")),
    }
}

fn require_spec(source: &SpecSource, prov: &mut Provenance) -> CliResult<KernelSpec> {
    load_spec(source, prov)?.ok_or_else(|| CliError::argument("a kernel spec is required (--spec or --preset)"))
}

fn grid_config(args: &GridArgs, prov: &mut Provenance) -> CliResult<GridConfig> {
    let explicit = args.h.is_some() || args.n_lin.is_some() || args.n_log.is_some() || args.uniform.is_some();
    let sources = [args.grid.is_some(), args.grid_preset.is_some(), explicit].iter().filter(|x| **x).count();
    if sources != 1 {
        return Err(CliError::argument("give exactly one of --grid, --grid-preset, or grid flags"));
    }
    if let Some(path) = &args.grid {
        return parse_json(&prov.read("grid", path)?, "grid file");
    }
    if let Some(name) = &args.grid_preset {
        return Ok(preset(name)?.grid);
    }
    let horizon = args.max_lag.ok_or_else(|| CliError::argument("--max-lag is required with grid flags"))?;
    match (args.uniform, args.h, args.n_lin, args.n_log) {
        (Some(n), None, None, None) => Ok(GridConfig::Uniform { n, horizon }),
        (None, Some(h), Some(n_lin), Some(n_log)) => Ok(GridConfig::Mixed { h, n_lin, n_log, horizon }),
        _ => Err(CliError::argument("grid flags need either --uniform or all of --h, --n-lin, --n-log")),
    }
}

fn train_config(args: &TrainArgs, prov: &mut Provenance) -> CliResult<TrainConfig> {
    let mut c = match &args.config {
        Some(path) => {
            let bytes = prov.read("train_config", path)?;
            TrainConfig::from_json(std::str::from_utf8(&bytes).map_err(|_| CliError::argument("config is not UTF-8"))?)?
        }
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = args.$f { c.$f = v; } )* };
    }
    set!(epochs, neurons, dgm_cells, quadrature_nodes, learning_rate, training_size, batch_size, seed);
    c.validate()?;
    Ok(c)
}

fn load_stats(path: &Path, prov: &mut Provenance) -> CliResult<SecondOrderStats> {
    let csv = prov.read("stats", path)?;
    let side_path = with_suffix(path, ".json");
    let side: Value = parse_json(&prov.read("stats_sidecar", &side_path)?, "statistics sidecar")?;
    Ok(SecondOrderStats::read(&csv[..], &side)?)
}

/// A kernel read back from disk.
enum LoadedKernel {
    Neural { models: Vec<RowModel>, marks: u32, horizon: f64 },
    WienerHopf(WhSolution),
    Analytic(KernelSpec),
}

impl KernelMatrix for LoadedKernel {
    fn dimension(&self) -> usize {
        match self {
            LoadedKernel::Neural { models, .. } => models.len(),
            LoadedKernel::WienerHopf(s) => s.dimension(),
            LoadedKernel::Analytic(s) => s.dimension,
        }
    }

    fn mark_cardinality(&self) -> u32 {
        match self {
            LoadedKernel::Neural { marks, .. } => *marks,
            LoadedKernel::WienerHopf(s) => s.mark_cardinality(),
            LoadedKernel::Analytic(s) => s.mark_cardinality,
        }
    }

    fn value(&self, i: usize, j: usize, t: f64, m: u32) -> f64 {
        match self {
            LoadedKernel::Neural { models, horizon, .. } => {
                if t > *horizon {
                    0.0
                } else {
                    models[i].eval(t, m)[j]
                }
            }
            LoadedKernel::WienerHopf(s) => s.value(i, j, t, m),
            LoadedKernel::Analytic(s) => s.value(i, j, t, m),
        }
    }
}

const FIT_FORMAT: &str = "neural-hawkes-fit";

fn load_fit(path: &Path, stats: Option<&SecondOrderStats>, prov: &mut Provenance) -> CliResult<LoadedKernel> {
    if path.is_dir() {
        let summary: Value = parse_json(&prov.read("fit", &path.join("fit.json"))?, "fit summary")?;
        if summary.get("format").and_then(Value::as_str) != Some(FIT_FORMAT) {
            return Err(CliError::argument(format!("{} is not a neural fit directory", path.display())));
        }
        let d = summary["dimension"].as_u64().ok_or_else(|| CliError::argument("fit summary lacks dimension"))? as usize;
        let marks = summary["mark_cardinality"].as_u64().ok_or_else(|| CliError::argument("fit summary lacks marks"))? as u32;
        let horizon = summary["horizon"].as_f64().ok_or_else(|| CliError::argument("fit summary lacks horizon"))?;
        let models = (1..=d)
            .map(|i| {
                let v: Value = parse_json(&prov.read("row", &path.join(format!("row_{i}.json")))?, "row model")?;
                Ok(RowModel::from_json(&v)?)
            })
            .collect::<CliResult<Vec<_>>>()?;
        Ok(LoadedKernel::Neural { models, marks, horizon })
    } else {
        let v: Value = parse_json(&prov.read("fit", path)?, "fit file")?;
        let stats = stats.ok_or_else(|| CliError::argument("Wiener-Hopf fits need --stats"))?;
        Ok(LoadedKernel::WienerHopf(WhSolution::from_json(&v, stats)?))
    }
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let params = json!({
        "preset": a.source.preset, "horizon": a.horizon, "events": a.events, "max_events": a.max_events,
        "trade_pairs": a.trade_pairs, "log_volume_mean": a.log_volume_mean, "log_volume_sd": a.log_volume_sd,
        "session_start_us": a.session_start_us,
    });
    let mut prov = Provenance::new("simulate", a.seed, params);
    let spec = require_spec(&a.source, &mut prov)?;
    if !a.trade_pairs.is_empty() {
        let n = a.events.ok_or_else(|| CliError::argument("trade prints need --events"))?;
        let trades = market::synthetic_trades(
            &spec,
            &a.trade_pairs,
            n,
            a.seed,
            a.session_start_us,
            a.log_volume_mean,
            a.log_volume_sd,
        )?;
        let mut sorted = trades;
        sorted.sort_by(|x, y| x.timestamp_us.cmp(&y.timestamp_us));
        let mut buf = Vec::new();
        market::write_trades(&mut buf, &sorted)?;
        write_file(&a.out, &buf)?;
        return write_file(&with_suffix(&a.out, ".json"), &pretty(&prov.json()));
    }
    let stream = match (a.horizon, a.events) {
        (Some(h), None) => {
            let mut config = SimConfig::new(spec, h, a.seed);
            if let Some(m) = a.max_events {
                config.max_events = m;
            }
            simulate(&config)?
        }
        (None, Some(n)) => simulate_events(&spec, n, a.seed)?,
        _ => return Err(CliError::argument("give exactly one of --horizon or --events")),
    };
    let mut buf = Vec::new();
    stream.write_csv(&mut buf, &prov.pairs())?;
    write_file(&a.out, &buf)
}

fn cmd_stats(a: StatsArgs) -> CliResult<()> {
    let params = json!({ "bootstrap": a.bootstrap });
    let mut prov = Provenance::new("stats", a.seed, params);
    let grid_cfg = grid_config(&a.grid, &mut prov)?;
    prov.params["grid"] = serde_json::to_value(grid_cfg).expect("grid serializes");
    let grid = grid_cfg.build()?;
    let stream = EventStream::read_csv(BufReader::new(&prov.read("events", &a.events)?[..]))?;
    let (stats, se) = estimate_with_bootstrap(&stream, &grid, a.bootstrap, a.seed)?;
    let mut csv = Vec::new();
    stats.write_csv(&mut csv, &prov.pairs())?;
    let mut side = stats.sidecar_json()?;
    side["provenance"] = prov.json();
    if a.bootstrap > 0 {
        side["standard_errors"] = json!(se);
    }
    write_file(&a.out, &csv)?;
    write_file(&with_suffix(&a.out, ".json"), &pretty(&side))
}

fn stationary_summary(norms: &NormMatrix, rates: &[f64]) -> Value {
    let ratio = branching_ratio(norms).ok();
    let baseline = match ratio {
        Some(r) if r < 1.0 => baseline_from_rates(norms, rates).ok(),
        _ => None,
    };
    json!({ "norms": norms.values, "branching_ratio": ratio, "baseline": baseline, "rates": rates })
}

fn cmd_fit_neural(a: FitNeuralArgs) -> CliResult<()> {
    let mut prov = Provenance::new("fit-neural", 0, json!({ "check_events": a.check_events }));
    let config = train_config(&a.train, &mut prov)?;
    prov.seed = config.seed;
    prov.params["train"] = serde_json::to_value(&config).expect("config serializes");
    let stats = load_stats(&a.stats, &mut prov)?;
    let models = fit(&stats, &config)?;
    let norms = fitted_norms(&models, &stats)?;
    let check = if a.check_events > 0 {
        let spec = fitted_spec(&models, &stats, &default_table_times(&stats, 400)?)?;
        let quad = solver_quadrature(&stats, &config)?;
        Some(goodness_of_fit(&spec, &stats, &quad, a.check_events, config.seed)?)
    } else {
        None
    };
    let summary = json!({
        "format": FIT_FORMAT,
        "provenance": prov.json(),
        "dimension": stats.dimension,
        "mark_cardinality": stats.mark_cardinality,
        "horizon": stats.grid.horizon,
        "final_validation_loss": models.iter().map(|m| m.history.last().copied()).collect::<Vec<_>>(),
        "stationarity": stationary_summary(&norms, &stats.rates),
        "goodness_of_fit": check,
    });
    let mut loss = csv_header(&prov);
    loss.push_str("epoch");
    for i in 1..=models.len() {
        loss.push_str(&format!(",row_{i}"));
    }
    loss.push('\n');
    for e in 0..config.epochs {
        loss.push_str(&(e + 1).to_string());
        for m in &models {
            loss.push_str(&format!(",{}", m.history[e]));
        }
        loss.push('\n');
    }
    for m in &models {
        let mut v = m.to_json();
        v["provenance"] = prov.json();
        write_file(&a.out.join(format!("row_{}.json", m.row + 1)), &pretty(&v))?;
    }
    write_file(&a.out.join("loss.csv"), loss.as_bytes())?;
    write_file(&a.out.join("fit.json"), &pretty(&summary))
}

fn cmd_fit_wh(a: FitWhArgs) -> CliResult<()> {
    let mut prov = Provenance::new("fit-wh", 0, json!({ "nodes": a.nodes }));
    let stats = load_stats(&a.stats, &mut prov)?;
    let solution = wh_solve(&stats, a.nodes)?;
    let mut v = solution.to_json();
    v["provenance"] = prov.json();
    write_file(&a.out, &pretty(&v))
}

fn kernel_from_args(args: &KernelArgs, stats: Option<&SecondOrderStats>, prov: &mut Provenance) -> CliResult<LoadedKernel> {
    match &args.fit {
        Some(path) => load_fit(path, stats, prov),
        None => Ok(LoadedKernel::Analytic(require_spec(&args.source, prov)?)),
    }
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let params = json!({ "times": a.times, "points": a.points, "max_lag": a.max_lag, "preset": a.kernel.source.preset });
    let mut prov = Provenance::new("eval", 0, params);
    let stats = a.stats.as_ref().map(|p| load_stats(p, &mut prov)).transpose()?;
    let kernel = kernel_from_args(&a.kernel, stats.as_ref(), &mut prov)?;
    let times = if a.times.is_empty() {
        let upper = a
            .max_lag
            .or(stats.as_ref().map(|s| s.grid.horizon))
            .ok_or_else(|| CliError::argument("give --times, --max-lag or --stats"))?;
        if a.points == 0 || !(upper > 0.0) {
            return Err(CliError::argument("need --points >= 1 and a positive upper time"));
        }
        (0..=a.points).map(|k| upper * k as f64 / a.points as f64).collect()
    } else {
        if a.times.iter().any(|t| !(*t >= 0.0)) {
            return Err(CliError::argument("evaluation times must be >= 0"));
        }
        a.times.clone()
    };
    let d = kernel.dimension();
    let marks = kernel.mark_cardinality();
    let cells: Vec<(usize, usize, u32)> =
        (0..d).flat_map(|i| (0..d).flat_map(move |j| (1..=marks).map(move |m| (i, j, m)))).collect();
    let rows: Vec<String> = cells
        .par_iter()
        .map(|&(i, j, m)| {
            times.iter().map(|&t| format!("{},{},{},{},{}\n", t, i + 1, j + 1, m, kernel.value(i, j, t, m))).collect()
        })
        .collect();
    let mut out = csv_header(&prov);
    out.push_str("t,i,j,mark,value\n");
    rows.iter().for_each(|r| out.push_str(r));
    write_file(&a.out, out.as_bytes())
}

fn cmd_metrics(a: MetricsArgs) -> CliResult<()> {
    let params = json!({ "k": a.k, "volumes": a.volumes, "preset": a.truth.preset });
    let mut prov = Provenance::new("metrics", 0, params);
    let stats = load_stats(&a.stats, &mut prov)?;
    let fitted = load_fit(&a.fit, Some(&stats), &mut prov)?;
    let truth = load_spec(&a.truth, &mut prov)?;
    if fitted.dimension() != stats.dimension || fitted.mark_cardinality() != stats.mark_cardinality {
        return Err(CliError::argument("fit and statistics have different shapes"));
    }
    let norms = match &fitted {
        LoadedKernel::Neural { models, .. } => fitted_norms(models, &stats)?,
        _ => l1_norms(&fitted, &stats.mark_pmfs, &QuadratureGrid::for_norms(stats.grid.horizon, 120)?),
    };
    let volumes = if a.volumes.is_empty() { vec![1.0; stats.dimension] } else { a.volumes.clone() };
    let causality = causality_report(&norms, &stats.rates, &volumes)?;
    let errors = truth
        .as_ref()
        .map(|spec| error_report(&fitted, spec, a.k, stats.grid.horizon, stats.grid.t_min))
        .transpose()?;
    if let Some(r) = &errors {
        let mut cells = csv_header(&prov);
        cells.push_str("i,j,mark,delta_2,delta_inf,normalized_delta_2,normalized_delta_inf\n");
        for c in &r.cells {
            cells.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.row, c.col, c.mark, c.delta_2, c.delta_inf, c.normalized_delta_2, c.normalized_delta_inf
            ));
        }
        write_file(&with_suffix(&a.out, ".cells.csv"), cells.as_bytes())?;
    }
    let report = json!({ "provenance": prov.json(), "causality": causality, "errors": errors });
    write_file(&a.out, &pretty(&report))
}

fn parse_clock(s: &str) -> CliResult<f64> {
    let bad = || CliError::argument(format!("bad clock time `{s}`, expected HH:MM"));
    let (h, m) = s.trim().split_once(':').ok_or_else(bad)?;
    let (h, m): (u32, u32) = (h.parse().map_err(|_| bad())?, m.parse().map_err(|_| bad())?);
    if h > 24 || m > 59 || (h == 24 && m > 0) {
        return Err(bad());
    }
    Ok((h * 3600 + m * 60) as f64)
}

fn cmd_ingest(a: IngestArgs) -> CliResult<()> {
    let params = json!({
        "pairs": a.pairs, "unmarked": a.unmarked, "session_start_us": a.session_start_us,
        "session_end_us": a.session_end_us, "window": a.window, "profile_minutes": a.profile_minutes,
    });
    let mut prov = Provenance::new("ingest", 0, params);
    let binning = match (&a.edges, a.unmarked) {
        (Some(path), _) => {
            let bytes = prov.read("edges", path)?;
            VolumeBinning::from_json(std::str::from_utf8(&bytes).map_err(|_| CliError::argument("edges not UTF-8"))?)?
        }
        (None, true) => VolumeBinning::new(Vec::new())?,
        (None, false) => VolumeBinning::usd_log_grid(),
    };
    let window = a
        .window
        .as_deref()
        .map(|w| {
            let (s, e) = w.split_once('-').ok_or_else(|| CliError::argument("window must look like HH:MM-HH:MM"))?;
            Ok::<_, CliError>((parse_clock(s)?, parse_clock(e)?))
        })
        .transpose()?;
    let trades = market::read_trades(&prov.read("trades", &a.trades)?[..])?;
    const DAY_US: i64 = 86_400_000_000;
    let start = match a.session_start_us {
        Some(s) => s,
        None => trades.iter().map(|t| t.timestamp_us).min().unwrap_or(0).div_euclid(DAY_US) * DAY_US,
    };
    let clock_offset = start.rem_euclid(DAY_US) as f64 * 1e-6;
    let (stream, summary) = market::trades_to_stream(&trades, &a.pairs, &binning, start, a.session_end_us)?;
    let profile = a.profile_minutes.map(|m| market::intraday_profile(&stream, m, clock_offset)).transpose()?;
    let stream = match window {
        Some((s, e)) => market::window_filter(&stream, s, e, clock_offset)?,
        None => stream,
    };
    let mut buf = Vec::new();
    stream.write_csv(&mut buf, &prov.pairs())?;
    let side = json!({
        "provenance": prov.json(),
        "summary": summary,
        "binning": binning,
        "window_events": stream.len(),
        "horizon": stream.horizon(),
    });
    if let Some(p) = profile {
        let mut csv = csv_header(&prov);
        csv.push_str("start_minute,mean_rate,ci_low,ci_high\n");
        for b in &p.bins {
            csv.push_str(&format!("{},{},{},{}\n", b.start_minute, b.mean_rate, b.ci_low, b.ci_high));
        }
        write_file(&with_suffix(&a.out, ".profile.csv"), csv.as_bytes())?;
    }
    write_file(&a.out, &buf)?;
    write_file(&with_suffix(&a.out, ".json"), &pretty(&side))
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let params = json!({ "param": a.param, "values": a.values, "k": a.k, "preset": a.truth.preset });
    let mut prov = Provenance::new("sweep", 0, params);
    let base = train_config(&a.train, &mut prov)?;
    prov.seed = base.seed;
    prov.params["train"] = serde_json::to_value(&base).expect("config serializes");
    let stats = load_stats(&a.stats, &mut prov)?;
    let truth = load_spec(&a.truth, &mut prov)?;
    let base_json = serde_json::to_value(&base).expect("config serializes");
    if base_json.get(&a.param).is_none() {
        return Err(CliError::argument(format!("unknown training parameter `{}`", a.param)));
    }
    let configs = a
        .values
        .iter()
        .map(|raw| {
            let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            let mut v = base_json.clone();
            v[&a.param] = value;
            let c: TrainConfig = serde_json::from_value(v)
                .map_err(|e| CliError::argument(format!("{}={raw}: {e}", a.param)))?;
            c.validate()?;
            Ok((raw.clone(), c))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let results = configs
        .par_iter()
        .map(|(raw, c)| {
            let models = fit(&stats, c).map_err(|e| HawkesError::Stage { stage: format!("{}={raw}", a.param), source: Box::new(e) })?;
            let errors = match &truth {
                Some(spec) => {
                    let kernel = LoadedKernel::Neural { models: models.clone(), marks: stats.mark_cardinality, horizon: stats.grid.horizon };
                    Some(error_report(&kernel, spec, a.k, stats.grid.horizon, stats.grid.t_min)?)
                }
                None => None,
            };
            Ok((raw.clone(), models, errors))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut table = csv_header(&prov);
    table.push_str("value,row,final_validation_loss,normalized_delta_2,normalized_delta_inf\n");
    let mut losses = csv_header(&prov);
    losses.push_str("value,row,epoch,validation_loss\n");
    let mut entries = Vec::new();
    for (raw, models, errors) in &results {
        let (d2, dinf) = errors.as_ref().map_or((String::new(), String::new()), |r| {
            (r.normalized_delta_2.to_string(), r.normalized_delta_inf.to_string())
        });
        for m in models {
            let last = m.history.last().map_or(String::new(), |v| v.to_string());
            table.push_str(&format!("{raw},{},{last},{d2},{dinf}\n", m.row + 1));
            for (e, l) in m.history.iter().enumerate() {
                losses.push_str(&format!("{raw},{},{},{l}\n", m.row + 1, e + 1));
            }
        }
        entries.push(json!({
            "value": raw,
            "final_validation_loss": models.iter().map(|m| m.history.last().copied()).collect::<Vec<_>>(),
            "errors": errors,
        }));
    }
    write_file(&a.out.join("sweep.csv"), table.as_bytes())?;
    write_file(&a.out.join("losses.csv"), losses.as_bytes())?;
    write_file(&a.out.join("sweep.json"), &pretty(&json!({ "provenance": prov.json(), "runs": entries })))
}

fn cmd_convergence(a: ConvergenceArgs) -> CliResult<()> {
    let params = json!({ "events": a.events, "seeds": a.seeds, "k": a.k, "preset": a.source.preset });
    let mut prov = Provenance::new("convergence", a.seeds.first().copied().unwrap_or(0), params);
    let spec = require_spec(&a.source, &mut prov)?;
    let grid_cfg = grid_config(&a.grid, &mut prov)?;
    prov.params["grid"] = serde_json::to_value(grid_cfg).expect("grid serializes");
    let config = train_config(&a.train, &mut prov)?;
    prov.params["train"] = serde_json::to_value(&config).expect("config serializes");
    let report = convergence_study(&spec, &a.events, &grid_cfg.build()?, &config, &a.seeds, a.k)?;
    let mut csv = csv_header(&prov);
    csv.push_str("n_events,seed,normalized_delta_2,normalized_delta_inf\n");
    for r in &report.runs {
        csv.push_str(&format!("{},{},{},{}\n", r.n_events, r.seed, r.normalized_delta_2, r.normalized_delta_inf));
    }
    write_file(&a.out.join("convergence.csv"), csv.as_bytes())?;
    write_file(&a.out.join("convergence.json"), &pretty(&json!({ "provenance": prov.json(), "report": report })))
}
