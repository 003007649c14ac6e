//! `fred` command-line front end.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::{json, Value};

use fred::data::{gaussian_ranks, write_summary_csv, CountSeries, Frequency, NaiveDate};
use fred::estimation::binbar::{binbar_gmm, binbar_ols, default_quadruplets};
use fred::estimation::nbar::{nbar_mle, nbar_ols};
use fred::estimation::EstimationResult;
use fred::models::binbar::BiNbarParams;
use fred::registry::{table1, table1_rho_grid, table1_u_grid, write_table1_csv, ModelSpec};
use fred::scenario::{run_scenario, ScenarioSpec};
use fred::sim::{simulate, simulate_series};
use fred::table::normalized_shares;
use fred::{FredError, Kind};

#[derive(Parser, Debug)]
#[command(name = "fred", version, about = "Forecast relative error decompositions for nonlinear time series")]
struct Cli {
    /// Default directory for outputs when `--out` is not given.
    #[arg(long, env = "FRED_OUT_DIR", global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Decomposition table for one model, argument and state.
    Decompose(DecomposeArgs),
    /// Fit NBAR / bivariate NBAR to a count CSV.
    Estimate(EstimateArgs),
    /// Evaluate a scenario grid from a JSON spec.
    Scenario(ScenarioArgs),
    /// Gaussian rank transform of two columns.
    Ranks(RanksArgs),
    /// Limiting INAR FELD grid.
    Table1(Table1Args),
    /// Validate a count CSV and print summary statistics.
    Summary(SummaryArgs),
    /// Simulate paths or a single stationary series.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model id (inar, arg, nbar, nbar2, gauss-var, markov, binary-chain, war, cauchy).
    #[arg(long)]
    model: String,
    /// Parameters as JSON.
    #[arg(long, conflicts_with = "fit")]
    params: Option<String>,
    /// Saved estimation result (JSON) supplying the parameters.
    #[arg(long)]
    fit: Option<PathBuf>,
}

impl ModelArgs {
    fn build(&self) -> anyhow::Result<ModelSpec> {
        match (&self.params, &self.fit) {
            (Some(p), _) => {
                let v: Value = serde_json::from_str(p).map_err(|e| FredError::InvalidInput(format!("--params: {e}")))?;
                Ok(ModelSpec::from_json(&self.model, &v)?)
            }
            (None, Some(f)) => {
                let v: Value = serde_json::from_reader(File::open(f).with_context(|| format!("opening {}", f.display()))?)
                    .map_err(FredError::from)?;
                Ok(ModelSpec::from_fit(&self.model, &v)?)
            }
            (None, None) => Err(FredError::InvalidInput("one of --params or --fit is required".into()).into()),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct DecomposeArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// fekd, feld or fevd.
    #[arg(long)]
    kind: String,
    /// Argument: u (feld), y (fekd) or `i,j` (fevd); comma separated.
    #[arg(long, default_value = "")]
    arg: String,
    /// Conditioning state, comma separated (row-major for matrices).
    #[arg(long)]
    state: String,
    /// Largest horizon.
    #[arg(long)]
    horizon: usize,
    /// Output file (default: stdout, or the output directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Also write normalized shares (`<out>.shares.csv`, or after the table on stdout).
    #[arg(long)]
    shares: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Method {
    Ols,
    Mle,
    Gmm,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// Input CSV `date,label1,...`.
    #[arg(long)]
    input: PathBuf,
    /// Sampling frequency of the input.
    #[arg(long, default_value = "weekly")]
    frequency: String,
    /// nbar or nbar2.
    #[arg(long)]
    model: String,
    /// ols, mle or gmm.
    #[arg(long, value_enum)]
    method: Method,
    /// Columns to use (labels or indices), comma separated.
    #[arg(long)]
    cols: Option<String>,
    /// Starting values as JSON (nbar mle: `[rho, delta]`; nbar2 gmm: 9 values or a parameter object).
    #[arg(long)]
    init: Option<String>,
    /// Output stem; writes `<stem>.json` and `<stem>.csv` (default: stdout JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario spec (JSON).
    spec: PathBuf,
    /// Overrides the spec's horizon.
    #[arg(long)]
    horizon: Option<usize>,
    /// Output directory (default: the global output directory, else `./scenario_out`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RanksArgs {
    /// Input CSV.
    #[arg(long)]
    input: PathBuf,
    /// Sampling frequency of the input.
    #[arg(long, default_value = "weekly")]
    frequency: String,
    /// Two columns `i,j` (labels or indices).
    #[arg(long)]
    cols: String,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct Table1Args {
    /// Poisson intensity.
    #[arg(long, default_value_t = 2.0)]
    lambda: f64,
    /// Comma-separated p grid (default 0.05,...,0.95).
    #[arg(long)]
    rho_grid: Option<String>,
    /// Comma-separated u grid (default 0.1,...,2.8).
    #[arg(long)]
    u_grid: Option<String>,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SummaryArgs {
    /// Input CSV.
    #[arg(long)]
    input: PathBuf,
    /// Sampling frequency of the input.
    #[arg(long, default_value = "weekly")]
    frequency: String,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial state, comma separated (ignored with `--series`).
    #[arg(long)]
    y0: Option<String>,
    /// Path length.
    #[arg(long)]
    horizon: usize,
    /// Number of paths.
    #[arg(long, default_value_t = 1)]
    n_paths: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit one stationary series as a dated count CSV instead of long-format paths.
    #[arg(long)]
    series: bool,
    /// First date for `--series`.
    #[arg(long, default_value = "2005-01-03")]
    start: String,
    /// Frequency for `--series`.
    #[arg(long, default_value = "weekly")]
    frequency: String,
    /// Keep latent draws (long-format only).
    #[arg(long)]
    latent: bool,
    /// Output file.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| FredError::InvalidInput(format!("{what}: `{t}` is not a number")).into()))
        .collect()
}

fn frequency(s: &str) -> anyhow::Result<Frequency> {
    Ok(s.parse::<Frequency>()?)
}

/// Output sink: explicit path, else `<out_dir>/<default_name>`, else stdout.
fn sink(out: Option<&Path>, out_dir: Option<&Path>, default_name: &str) -> anyhow::Result<(Box<dyn Write>, String)> {
    let path = match (out, out_dir) {
        (Some(p), _) => Some(p.to_path_buf()),
        (None, Some(d)) => {
            std::fs::create_dir_all(d)?;
            Some(d.join(default_name))
        }
        (None, None) => None,
    };
    Ok(match path {
        Some(p) => {
            let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
            (Box::new(BufWriter::new(f)), p.display().to_string())
        }
        None => (Box::new(io::stdout().lock()), "stdout".into()),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let out_dir = cli.out_dir.as_deref();
    match cli.command {
        Command::Decompose(a) => {
            let model = a.model.build()?;
            let kind = Kind::parse(&a.kind)?;
            let arg = parse_list(&a.arg, "--arg")?;
            let state = parse_list(&a.state, "--state")?;
            if a.horizon == 0 {
                return Err(FredError::Horizon("--horizon must be >= 1".into()).into());
            }
            info!("decompose model={} kind={kind:?} arg={arg:?} state={state:?} horizon={}", model.id(), a.horizon);
            let horizons: Vec<usize> = (1..=a.horizon).collect();
            let table = model.decompose(kind, &arg, &state, &horizons)?;
            let ext = match a.format {
                Format::Csv => "csv",
                Format::Json => "json",
            };
            let (mut w, dest) = sink(a.out.as_deref(), out_dir, &format!("decompose_{}_{}.{ext}", model.id(), a.kind))?;
            match a.format {
                Format::Csv => table.write_csv(&mut w)?,
                Format::Json => writeln!(w, "{}", serde_json::to_string_pretty(&table.to_json())?)?,
            }
            if a.shares {
                let shares = normalized_shares(&table)?;
                let target = a.out.as_ref().map(|p| p.with_extension("shares.csv"));
                let (mut sw, _) = match (&target, out_dir) {
                    (Some(p), _) => sink(Some(p), None, "")?,
                    (None, Some(_)) => sink(None, out_dir, &format!("decompose_{}_{}.shares.csv", model.id(), a.kind))?,
                    (None, None) => (Box::new(io::stdout().lock()) as Box<dyn Write>, String::new()),
                };
                writeln!(sw, "h,k,share")?;
                for ((k, h), s) in shares {
                    writeln!(sw, "{h},{k},{s:.12}")?;
                }
                sw.flush()?;
            }
            w.flush()?;
            info!("wrote {dest}");
        }
        Command::Estimate(a) => {
            let series = CountSeries::ingest(&a.input, frequency(&a.frequency)?)?;
            let cols: Vec<usize> = match &a.cols {
                Some(c) => c.split(',').map(|k| series.column_index(k.trim())).collect::<fred::Result<_>>()?,
                None => (0..series.dim()).collect(),
            };
            info!("estimate input={} model={} method={:?} cols={cols:?}", a.input.display(), a.model, a.method);
            let result = estimate(&series, &cols, &a.model, a.method, a.init.as_deref())?;
            let stem = a.out.clone().or_else(|| out_dir.map(|d| d.join(format!("estimate_{}_{:?}", a.model, a.method).to_lowercase())));
            match stem {
                Some(stem) => {
                    if let Some(parent) = stem.parent().filter(|p| !p.as_os_str().is_empty()) {
                        std::fs::create_dir_all(parent)?;
                    }
                    let jpath = stem.with_extension("json");
                    std::fs::write(&jpath, serde_json::to_string_pretty(&result.to_json())?)?;
                    result.write_summary_csv(File::create(stem.with_extension("csv"))?)?;
                    info!("wrote {}", jpath.display());
                }
                None => writeln!(io::stdout().lock(), "{}", serde_json::to_string_pretty(&result.to_json())?)?,
            }
        }
        Command::Scenario(a) => {
            let mut spec: ScenarioSpec = serde_json::from_reader(File::open(&a.spec).with_context(|| format!("opening {}", a.spec.display()))?)
                .map_err(|e| FredError::InvalidInput(format!("scenario spec: {e}")))?;
            if let Some(h) = a.horizon {
                spec.horizon = h;
            }
            info!("scenario resolved: {}", serde_json::to_string(&spec)?);
            let model = spec.model(a.spec.parent())?;
            let output = run_scenario(&spec, &model)?;
            let dir = a.out.clone().or_else(|| out_dir.map(Path::to_path_buf)).unwrap_or_else(|| PathBuf::from("scenario_out"));
            std::fs::create_dir_all(&dir)?;
            let mut index = Vec::new();
            for (i, cell) in output.cells.iter().enumerate() {
                let name = format!("cell_{i:03}.csv");
                cell.table.write_csv(File::create(dir.join(&name))?)?;
                index.push(json!({"file": name, "label": cell.label, "argument": cell.argument, "state": cell.state}));
            }
            output.write_comparison_csv(File::create(dir.join("comparison.csv"))?)?;
            output.write_shares_csv(File::create(dir.join("shares.csv"))?)?;
            std::fs::write(dir.join("index.json"), serde_json::to_string_pretty(&Value::Array(index))?)?;
            info!("wrote {} cells to {}", output.cells.len(), dir.display());
        }
        Command::Ranks(a) => {
            let series = CountSeries::ingest(&a.input, frequency(&a.frequency)?)?;
            let cols: Vec<usize> = a.cols.split(',').map(|k| series.column_index(k.trim())).collect::<fred::Result<_>>()?;
            if cols.len() != 2 {
                return Err(FredError::InvalidInput("--cols needs exactly two columns".into()).into());
            }
            let r0 = gaussian_ranks(&series.column(cols[0]));
            let r1 = gaussian_ranks(&series.column(cols[1]));
            let (mut w, dest) = sink(a.out.as_deref(), out_dir, "ranks.csv")?;
            writeln!(w, "date,{},{}", series.labels[cols[0]], series.labels[cols[1]])?;
            for ((d, x), y) in series.dates.iter().zip(&r0).zip(&r1) {
                writeln!(w, "{},{x:.12},{y:.12}", d.format("%Y-%m-%d"))?;
            }
            w.flush()?;
            info!("wrote {dest}");
        }
        Command::Table1(a) => {
            let rho = match &a.rho_grid {
                Some(s) => parse_list(s, "--rho-grid")?,
                None => table1_rho_grid(),
            };
            let u = match &a.u_grid {
                Some(s) => parse_list(s, "--u-grid")?,
                None => table1_u_grid(),
            };
            if u.iter().any(|v| *v <= 0.0) || rho.iter().any(|v| *v <= 0.0) {
                return Err(FredError::InvalidInput("grids must be positive".into()).into());
            }
            info!("table1 lambda={} rho={rho:?} u={u:?}", a.lambda);
            let grid = table1(a.lambda, &rho, &u)?;
            let (mut w, dest) = sink(a.out.as_deref(), out_dir, "table1.csv")?;
            write_table1_csv(&rho, &u, &grid, &mut w)?;
            w.flush()?;
            info!("wrote {dest}");
        }
        Command::Summary(a) => {
            let series = CountSeries::ingest(&a.input, frequency(&a.frequency)?)?;
            info!("summary input={} rows={} cols={}", a.input.display(), series.len(), series.dim());
            let (mut w, dest) = sink(a.out.as_deref(), out_dir, "summary.csv")?;
            write_summary_csv(&series.summary(), &mut w)?;
            w.flush()?;
            info!("wrote {dest}");
        }
        Command::Simulate(a) => {
            let model = a.model.build()?;
            let sim = model.as_simulate();
            info!("simulate model={} horizon={} n_paths={} seed={} series={}", model.id(), a.horizon, a.n_paths, a.seed, a.series);
            if a.series {
                let rows = simulate_series(sim, a.horizon, a.seed);
                let start = chrono_date(&a.start)?;
                let labels: Vec<String> = (1..=sim.state_len()).map(|i| format!("y{i}")).collect();
                let series = CountSeries::from_rows(start, frequency(&a.frequency)?, labels, rows)?;
                let (mut w, dest) = sink(a.out.as_deref(), out_dir, &format!("series_{}.csv", model.id()))?;
                series.write_csv(&mut w)?;
                w.flush()?;
                info!("wrote {dest}");
            } else {
                let y0 = parse_list(a.y0.as_deref().unwrap_or(""), "--y0")?;
                let paths = simulate(sim, &y0, a.horizon, a.n_paths, a.seed, a.latent)?;
                let (mut w, dest) = sink(a.out.as_deref(), out_dir, &format!("paths_{}.csv", model.id()))?;
                paths.write_csv(&mut w)?;
                w.flush()?;
                info!("wrote {dest}");
            }
        }
    }
    Ok(())
}

fn chrono_date(s: &str) -> anyhow::Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| FredError::InvalidInput(format!("--start: {e}")).into())
}

fn estimate(series: &CountSeries, cols: &[usize], model: &str, method: Method, init: Option<&str>) -> anyhow::Result<EstimationResult> {
    let init: Option<Value> = init
        .map(serde_json::from_str)
        .transpose()
        .map_err(|e| FredError::InvalidInput(format!("--init: {e}")))?;
    match model {
        "nbar" => {
            if cols.len() != 1 {
                return Err(FredError::InvalidInput(format!("nbar needs exactly one column, got {}", cols.len())).into());
            }
            let y = series.column(cols[0]);
            match method {
                Method::Ols => Ok(nbar_ols(&y)?),
                Method::Mle => {
                    let start = match init {
                        Some(v) => {
                            let a: [f64; 2] = serde_json::from_value(v).map_err(|e| FredError::InvalidInput(format!("--init: {e}")))?;
                            (a[0], a[1])
                        }
                        None => match nbar_ols(&y) {
                            Ok(r) if r.theta[0] > 0.0 && r.theta[0] < 1.0 && r.theta[1] > 0.0 => (r.theta[0], r.theta[1]),
                            _ => (0.5, 1.0),
                        },
                    };
                    Ok(nbar_mle(&y, start)?)
                }
                Method::Gmm => Err(FredError::InvalidInput("gmm is implemented for nbar2 only".into()).into()),
            }
        }
        "nbar2" => {
            if cols.len() != 2 {
                return Err(FredError::InvalidInput(format!("nbar2 needs exactly two columns, got {}", cols.len())).into());
            }
            let rows: Vec<Vec<f64>> = series.values.iter().map(|r| vec![r[cols[0]], r[cols[1]]]).collect();
            match method {
                Method::Ols => Ok(binbar_ols(&rows)?),
                Method::Gmm => {
                    let start = match init {
                        Some(v @ Value::Array(_)) => serde_json::from_value::<[f64; 9]>(v)
                            .map_err(|e| FredError::InvalidInput(format!("--init: {e}")))?,
                        Some(v) => serde_json::from_value::<BiNbarParams>(v)
                            .map_err(|e| FredError::InvalidInput(format!("--init: {e}")))?
                            .to_array(),
                        None => BiNbarParams::reference_admissible().to_array(),
                    };
                    Ok(binbar_gmm(&rows, &default_quadruplets(), start)?)
                }
                Method::Mle => Err(FredError::InvalidInput("mle is implemented for nbar only".into()).into()),
            }
        }
        other => Err(FredError::InvalidInput(format!("estimate supports nbar and nbar2, not `{other}`")).into()),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<FredError>() {
        return if e.is_validation() { 2 } else { 3 };
    }
    if err.downcast_ref::<io::Error>().is_some() {
        return 2;
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed downstream pipe (`fred ... | head`) is not an error.
        Err(e) if e.chain().any(|c| c.downcast_ref::<io::Error>().is_some_and(|i| i.kind() == io::ErrorKind::BrokenPipe)) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
