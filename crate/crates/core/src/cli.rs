//! Command-line front end: `eval`, `energy`, `recurse` and `verify`.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage error,
//! 3 numerical failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::distributions::{load_tabulated, Distribution};
use crate::error::Error;
use crate::exec::Execution;
use crate::functional::{derangetropy_grid, energy_decomposition};
use crate::numerics::{linspace, QuadratureSpec};
use crate::recursion::{
    convergence_metrics, default_delta, discretize, iterate, ConvergenceMetrics, GridRow,
    DEFAULT_POINTS, DEFAULT_TAIL_EPS, MIN_POINTS,
};
use crate::verify::{run_suite, Suite, VerificationReport};

pub const EXIT_OK: u8 = 0;
pub const EXIT_VERIFICATION_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

/// Overrides the default quadrature `abs_tol`.
pub const TOLERANCE_ENV: &str = "DERANGETROPY_SEED_TOL";

const DEFAULT_EVAL_POINTS: usize = 1001;
const MAX_LEVELS: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "derangetropy",
    version,
    about = "Evaluate, iterate and verify the derangetropy functional"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate x, f, F, rho over a grid.
    Eval(GridArgs),
    /// Tabulate the energy decomposition of `-log rho`.
    Energy(GridArgs),
    /// Iterate the functional on a grid and report concentration metrics.
    Recurse(RecurseArgs),
    /// Run numerical verification checks and print a JSON report.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args, Default)]
pub struct GridArgs {
    /// Distribution, e.g. `uniform:0,1`, `normal:0,1`, `exponential:1`,
    /// `semicircle:-1,1`, `arcsin:0,1`, `tabulated:path.csv`.
    #[arg(long, allow_hyphen_values = true)]
    pub dist: Option<String>,
    /// Number of grid points, at least 101 (default: 1001 for eval and
    /// energy, 4001 for recurse).
    #[arg(long)]
    pub points: Option<usize>,
    /// Tail probability cut from each end of the support, in (0, 0.1)
    /// (default: 1e-9).
    #[arg(long)]
    pub tail_eps: Option<f64>,
    /// Output format (default: csv).
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Output file (standard output when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON file with any of: dist, points, tail_eps, format, out, levels, delta.
    /// Command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct RecurseArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    /// Number of iterations, 1 to 10 (default: 3).
    #[arg(long)]
    pub levels: Option<usize>,
    /// Half-width of the central-mass window (default: 5% of grid width).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Write the metrics table here instead of after the grid dump.
    #[arg(long)]
    pub metrics_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    pub suite: Suite,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fields accepted by `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub dist: Option<String>,
    pub points: Option<usize>,
    pub tail_eps: Option<f64>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
    pub levels: Option<usize>,
    pub delta: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub distribution: Distribution,
    pub points: usize,
    pub tail_eps: f64,
    pub format: Format,
    pub out: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Numerical(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            // Unreadable/ill-formed input files are configuration problems.
            CliError::Numerical(Error::Parse(_))
            | CliError::Numerical(Error::NonMonotoneGrid { .. })
            | CliError::Numerical(Error::NegativeDensity { .. })
            | CliError::Numerical(Error::Io(_)) => EXIT_USAGE,
            CliError::Numerical(_) => EXIT_NUMERICAL,
            CliError::Io(_) => EXIT_NUMERICAL,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Parses the `name:p1,p2` micro-grammar.
pub fn parse_distribution(spec: &str) -> Result<Distribution, CliError> {
    let (name, rest) = spec
        .split_once(':')
        .ok_or_else(|| usage(format!("distribution `{spec}` must look like name:params")))?;
    let name = name.trim().to_ascii_lowercase();
    if name == "tabulated" {
        return Ok(load_tabulated(Path::new(rest.trim()))?);
    }
    let params = rest
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| usage(format!("bad parameter `{p}` in `{spec}`: {e}")))
        })
        .collect::<Result<Vec<f64>, CliError>>()?;
    let arity = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(usage(format!(
                "{name} takes {n} parameter(s), got {}",
                params.len()
            )))
        }
    };
    let built = match name.as_str() {
        "uniform" => arity(2).map(|_| Distribution::uniform(params[0], params[1])),
        "normal" => arity(2).map(|_| Distribution::normal(params[0], params[1])),
        "exponential" => arity(1).map(|_| Distribution::exponential(params[0])),
        "semicircle" => arity(2).map(|_| Distribution::semicircle(params[0], params[1])),
        "arcsin" => arity(2).map(|_| Distribution::arcsin(params[0], params[1])),
        other => return Err(usage(format!("unknown distribution `{other}`"))),
    }?;
    built.map_err(|e| usage(e.to_string()))
}

fn read_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("bad config {}: {e}", path.display())))
}

fn resolve(
    grid: &GridArgs,
    file: &ConfigFile,
    default_points: usize,
) -> Result<RunConfig, CliError> {
    let dist = grid
        .dist
        .clone()
        .or_else(|| file.dist.clone())
        .ok_or_else(|| usage("missing --dist"))?;
    let points = grid.points.or(file.points).unwrap_or(default_points);
    if points < MIN_POINTS {
        return Err(usage(format!(
            "--points must be at least {MIN_POINTS}, got {points}"
        )));
    }
    let tail_eps = grid.tail_eps.or(file.tail_eps).unwrap_or(DEFAULT_TAIL_EPS);
    if !(tail_eps > 0.0 && tail_eps < 0.1) {
        return Err(usage(format!(
            "--tail-eps must be in (0, 0.1), got {tail_eps}"
        )));
    }
    Ok(RunConfig {
        distribution: parse_distribution(&dist)?,
        points,
        tail_eps,
        format: grid.format.or(file.format).unwrap_or(Format::Csv),
        out: grid.out.clone().or_else(|| file.out.clone()),
    })
}

fn quadrature_spec() -> Result<QuadratureSpec, CliError> {
    let spec = QuadratureSpec::default();
    match std::env::var(TOLERANCE_ENV) {
        Ok(raw) => {
            let tol: f64 = raw
                .trim()
                .parse()
                .map_err(|e| usage(format!("{TOLERANCE_ENV}=`{raw}`: {e}")))?;
            let spec = spec.with_abs_tol(tol);
            spec.validate().map_err(|e| usage(e.to_string()))?;
            Ok(spec)
        }
        Err(std::env::VarError::NotPresent) => Ok(spec),
        Err(e) => Err(usage(format!("{TOLERANCE_ENV}: {e}"))),
    }
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn csv_table(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn grid_xs(cfg: &RunConfig) -> Result<Vec<f64>, CliError> {
    let (lo, hi) = cfg.distribution.quantile_range(cfg.tail_eps)?;
    Ok(linspace(lo, hi, cfg.points))
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<String, CliError> {
    let xs = grid_xs(cfg)?;
    let values = derangetropy_grid(&cfg.distribution, &xs, Execution::default());
    Ok(match cfg.format {
        Format::Csv => csv_table(
            &["x", "f", "F", "rho"],
            values.iter().map(|v| {
                vec![
                    v.x.to_string(),
                    v.f.to_string(),
                    v.cdf.to_string(),
                    v.rho.to_string(),
                ]
            }),
        ),
        Format::Json => serde_json::to_string(&values).expect("plain data serializes") + "\n",
    })
}

#[derive(Serialize)]
struct EnergyRow {
    x: f64,
    e_oscillatory: f64,
    e_structural: f64,
    e_total: f64,
}

pub fn cmd_energy(cfg: &RunConfig) -> Result<String, CliError> {
    let xs = grid_xs(cfg)?;
    let d = &cfg.distribution;
    let rows = Execution::default()
        .map_slice(&xs, |&x| energy_decomposition(d, x))
        .into_iter()
        .map(|e| {
            e.map(|e| EnergyRow {
                x: e.x,
                e_oscillatory: e.e_oscillatory,
                e_structural: e.e_structural,
                e_total: e.e_total,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(match cfg.format {
        Format::Csv => csv_table(
            &["x", "e_oscillatory", "e_structural", "e_total"],
            rows.iter().map(|r| {
                vec![
                    r.x.to_string(),
                    r.e_oscillatory.to_string(),
                    r.e_structural.to_string(),
                    r.e_total.to_string(),
                ]
            }),
        ),
        Format::Json => serde_json::to_string(&rows).expect("plain data serializes") + "\n",
    })
}

/// Grid dump and metrics table, rendered separately.
pub struct RecurseOutput {
    pub grid: String,
    pub metrics: String,
    pub rows: Vec<GridRow>,
    pub table: Vec<ConvergenceMetrics>,
}

pub fn cmd_recurse(
    cfg: &RunConfig,
    levels: usize,
    delta: Option<f64>,
) -> Result<RecurseOutput, CliError> {
    if !(1..=MAX_LEVELS).contains(&levels) {
        return Err(usage(format!(
            "--levels must be in [1, {MAX_LEVELS}], got {levels}"
        )));
    }
    if let Some(delta) = delta {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(usage(format!("--delta must be positive, got {delta}")));
        }
    }
    let g0 = discretize(&cfg.distribution, cfg.points, cfg.tail_eps)?;
    let delta = delta.unwrap_or_else(|| default_delta(&g0));
    let all = iterate(&g0, levels)?;
    let table = all
        .iter()
        .map(|g| convergence_metrics(g, delta))
        .collect::<Result<Vec<_>, Error>>()?;
    let rows: Vec<GridRow> = all.iter().flat_map(|g| g.rows()).collect();
    let (grid, metrics) = match cfg.format {
        Format::Csv => (
            csv_table(
                &["x", "density", "cdf", "level"],
                rows.iter().map(|r| {
                    vec![
                        r.x.to_string(),
                        r.density.to_string(),
                        r.cdf.to_string(),
                        r.level.to_string(),
                    ]
                }),
            ),
            csv_table(
                &["level", "median", "variance", "iqr", "central_mass"],
                table.iter().map(|m| {
                    vec![
                        m.level.to_string(),
                        m.median.to_string(),
                        m.variance.to_string(),
                        m.iqr.to_string(),
                        m.central_mass.to_string(),
                    ]
                }),
            ),
        ),
        Format::Json => (
            serde_json::to_string(&rows).expect("plain data serializes"),
            serde_json::to_string(&table).expect("plain data serializes"),
        ),
    };
    Ok(RecurseOutput {
        grid,
        metrics,
        rows,
        table,
    })
}

pub fn cmd_verify(suite: Suite) -> Result<(Vec<VerificationReport>, String), CliError> {
    let spec = quadrature_spec()?;
    let reports = run_suite(suite, &spec)?;
    let json = serde_json::to_string_pretty(&reports).expect("plain data serializes") + "\n";
    Ok((reports, json))
}

fn execute(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Eval(args) => {
            let file = args
                .config
                .as_deref()
                .map(read_config)
                .transpose()?
                .unwrap_or_default();
            let cfg = resolve(&args, &file, DEFAULT_EVAL_POINTS)?;
            let text = cmd_eval(&cfg)?;
            emit(cfg.out.as_deref(), &text)?;
        }
        Command::Energy(args) => {
            let file = args
                .config
                .as_deref()
                .map(read_config)
                .transpose()?
                .unwrap_or_default();
            let cfg = resolve(&args, &file, DEFAULT_EVAL_POINTS)?;
            let text = cmd_energy(&cfg)?;
            emit(cfg.out.as_deref(), &text)?;
        }
        Command::Recurse(args) => {
            let file = args
                .grid
                .config
                .as_deref()
                .map(read_config)
                .transpose()?
                .unwrap_or_default();
            let cfg = resolve(&args.grid, &file, DEFAULT_POINTS)?;
            let levels = args.levels.or(file.levels).unwrap_or(3);
            let delta = args.delta.or(file.delta);
            let out = cmd_recurse(&cfg, levels, delta)?;
            match (&args.metrics_out, cfg.format) {
                (Some(path), _) => {
                    emit(cfg.out.as_deref(), &with_newline(out.grid))?;
                    emit(Some(path), &with_newline(out.metrics))?;
                }
                (None, Format::Csv) => {
                    let mut text = out.grid;
                    text.push('\n');
                    text.push_str(&out.metrics);
                    emit(cfg.out.as_deref(), &text)?;
                }
                (None, Format::Json) => {
                    let text = format!("{{\"grid\":{},\"metrics\":{}}}\n", out.grid, out.metrics);
                    emit(cfg.out.as_deref(), &text)?;
                }
            }
        }
        Command::Verify(args) => {
            let (reports, json) = cmd_verify(args.suite)?;
            emit(args.out.as_deref(), &json)?;
            if reports.iter().any(|r| !r.passed) {
                for r in reports.iter().filter(|r| !r.passed) {
                    eprintln!(
                        "FAILED {}: residual {:e} > tolerance {:e}",
                        r.check_name, r.residual, r.tolerance
                    );
                }
                return Ok(EXIT_VERIFICATION_FAILED);
            }
        }
    }
    Ok(EXIT_OK)
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn emit(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    let mut w = open_output(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Parses arguments, runs the subcommand and returns the process exit code.
/// Diagnostics go to standard error.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
