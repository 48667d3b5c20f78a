//! Command-line interface to the subsampled-ensemble estimator.
//!
//! Subcommands: `ingest` (CSV to binary store), `fit` (ensemble estimate
//! with inference), `simulate` (Monte Carlo validation over an `(n, K)`
//! grid), and `msecurve` (estimation error versus ensemble size).
//!
//! Every command is deterministic given its flags; randomized commands
//! default to seed 42 and echo the seed in their output. Exit codes:
//! 0 success, 2 invalid usage or input, 3 estimation failure, 4 storage
//! failure, 64 unknown flag.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bagfit::bagging::{bagging_estimate, FitReport};
use bagfit::config::{auto_subsample_size, BaggingConfig, Parallelism};
use bagfit::error::{Error, Result};
use bagfit::ingest::{ingest_csv, parse_column_specs, IngestOptions};
use bagfit::model::{Family, GlmLoss};
use bagfit::simulate::{monte_carlo, mse_curve, SimDesign};
use bagfit::store::RowStore;

/// Default seed for randomized commands; echoed in every output.
const DEFAULT_SEED: u64 = 42;

/// Desk-scale simulation preset: dataset rows and replications.
const DESK_SCALE: (u64, usize) = (20_000, 200);

/// Full-scale simulation preset (slow; hours for some grids).
const FULL_SCALE: (u64, usize) = (200_000, 1000);

#[derive(Parser)]
#[command(
    name = "bagfit",
    version,
    about = "Ensemble estimation for datasets too large to fit whole: \
             subsample, fit, average, and quantify uncertainty.",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a CSV file into a binary row store.
    Ingest(IngestArgs),
    /// Fit an ensemble estimate against a row store and report inference.
    Fit(FitArgs),
    /// Monte Carlo validation of the estimator over an (n, K) grid.
    Simulate(SimulateArgs),
    /// Trace mean squared error against ensemble size.
    Msecurve(MsecurveArgs),
}

#[derive(Args)]
struct IngestArgs {
    /// Input CSV path (header row required).
    #[arg(long)]
    csv: PathBuf,
    /// Column specification, e.g. "y:response,age:numeric,city:categorical".
    /// CSV columns not listed are ignored.
    #[arg(long)]
    schema: String,
    /// Output store path (a `<path>.schema.json` sidecar is written too).
    #[arg(long)]
    out: PathBuf,
    /// Prepend a constant-one covariate named "intercept".
    #[arg(long)]
    intercept: bool,
}

#[derive(Args)]
struct FitArgs {
    /// Row store produced by `ingest` (or by the library writers).
    #[arg(long)]
    store: PathBuf,
    /// Loss family: linear, logistic, or poisson.
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Rows per subsample, or "auto" for floor(sqrt(N) * log log N).
    #[arg(long, value_parser = parse_subsample_size)]
    n: SubsampleSize,
    /// Number of subsamples in the ensemble.
    #[arg(long)]
    k: usize,
    /// Master seed for subsample draws.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Confidence level for intervals.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Also write the report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Include every subsample's coefficient vector in the JSON report.
    #[arg(long)]
    subsample_thetas: bool,
    /// Cap worker threads (results are identical at any setting).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy)]
enum SubsampleSize {
    Auto,
    Rows(usize),
}

fn parse_subsample_size(text: &str) -> std::result::Result<SubsampleSize, String> {
    if text.eq_ignore_ascii_case("auto") {
        return Ok(SubsampleSize::Auto);
    }
    text.parse::<usize>()
        .map(SubsampleSize::Rows)
        .map_err(|_| format!("expected a row count or \"auto\", got {text:?}"))
}

fn parse_family(text: &str) -> std::result::Result<Family, String> {
    Family::parse(text).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SimulateArgs {
    /// Reference design: linear, logistic, or poisson.
    #[arg(long, value_parser = parse_family)]
    design: Family,
    /// Evaluation grid, e.g. "n=500,750,1000;K=50..250". Ranges expand to
    /// five evenly spaced values; "a..b:s" steps by s.
    #[arg(long)]
    grid: String,
    /// Monte Carlo replications, at least 2 (default: 200, or 1000 with
    /// --full-scale).
    #[arg(long)]
    b: Option<usize>,
    /// Dataset rows per replication (default: 20000, or 200000 with
    /// --full-scale).
    #[arg(long)]
    n_total: Option<u64>,
    /// Use the full-scale preset (N = 200000, B = 1000; slow). Explicit
    /// --n-total/--b still win.
    #[arg(long, alias = "paper-scale")]
    full_scale: bool,
    /// Design seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Confidence level for coverage.
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    /// Also write the CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the full report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Cap worker threads (results are identical at any setting).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct MsecurveArgs {
    /// Reference design: linear, logistic, or poisson.
    #[arg(long, value_parser = parse_family)]
    design: Family,
    /// Rows per subsample.
    #[arg(long)]
    n: usize,
    /// Ensemble sizes to evaluate, e.g. "50,100,200" or "50..2000".
    #[arg(long)]
    k_list: String,
    /// Monte Carlo replications.
    #[arg(long, default_value_t = 50)]
    b: usize,
    /// Dataset rows per replication.
    #[arg(long, default_value_t = DESK_SCALE.0)]
    n_total: u64,
    /// Design seed.
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Also write the CSV to this path.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Also write the full report as JSON to this path.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Cap worker threads (results are identical at any setting).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    return ExitCode::SUCCESS;
                }
                ErrorKind::UnknownArgument => {
                    eprint!("{e}");
                    return ExitCode::from(64);
                }
                _ => {
                    eprint!("{e}");
                    return ExitCode::from(2);
                }
            }
        }
    };

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Map error categories to exit codes: 2 invalid usage or input, 3
/// estimation failure, 4 storage failure.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_)
        | Error::CorruptHeader { .. }
        | Error::TruncatedFile { .. }
        | Error::SchemaMismatch { .. }
        | Error::IndexOutOfRange { .. } => 4,
        Error::SingularMatrix { .. }
        | Error::NonFiniteLoss { .. }
        | Error::NonFiniteValue { .. }
        | Error::SingularHessian { .. }
        | Error::MaxIterExceeded { .. }
        | Error::SubsampleFitFailed { .. }
        | Error::ZeroSe { .. } => 3,
        Error::InvalidInput { .. }
        | Error::UnknownLevel { .. }
        | Error::NonNumericValue { .. }
        | Error::RaggedRow { .. }
        | Error::EmptyInput
        | Error::ZeroVariance { .. }
        | Error::Degenerate { .. } => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest(args) => run_ingest(args),
        Command::Fit(args) => run_fit(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Msecurve(args) => run_msecurve(args),
    }
}

fn run_ingest(args: IngestArgs) -> Result<()> {
    let mut options = IngestOptions::new(parse_column_specs(&args.schema)?);
    options.add_intercept = args.intercept;
    let report = ingest_csv(&args.csv, &args.out, &options)?;
    print!("wrote {}\n{}", args.out.display(), report.describe());
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let store = RowStore::open(&args.store)?;
    let n = match args.n {
        SubsampleSize::Auto => auto_subsample_size(store.n_rows()),
        SubsampleSize::Rows(n) => n,
    };
    let mut cfg = BaggingConfig::new(n, args.k, args.seed);
    if let Some(t) = args.threads {
        cfg.parallelism = Parallelism::Fixed(t);
    }
    for warning in cfg.warnings(store.n_rows()) {
        eprintln!("warning: {warning}");
    }

    let model = GlmLoss::new(args.family, store.covariate_dim())?;
    let result = bagging_estimate(&model, &store, &cfg)?;
    let report = FitReport::from_result(&result, args.level, args.subsample_thetas)?;

    print_fit_table(&report, args.family, args.level, &store)?;

    if let Some(path) = &args.json {
        let mut file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(&mut file, &report)
            .map_err(|e| Error::invalid(format!("could not serialize report: {e}")))?;
        file.write_all(b"\n")?;
    }
    Ok(())
}

fn print_fit_table(
    report: &FitReport,
    family: Family,
    level: f64,
    store: &RowStore,
) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(
        out,
        "family: {}   N: {}   n: {}   K: {}   seed: {}   retries: {}   level: {}",
        family.name(),
        report.n_rows,
        report.n,
        report.n_subsamples,
        report.seed,
        report.retries_used,
        level,
    )?;
    if report.se.is_none() {
        writeln!(out, "note: K = 1 carries no spread; no inference columns")?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "{:<24} {:>14} {:>12} {:>14} {:>14} {:>12}",
        "coefficient", "estimate", "se", "ci_low", "ci_high", "p"
    )?;
    let names = store.schema().expanded_names();
    for (j, name) in names.iter().enumerate() {
        let estimate = report.theta_bag[j];
        match (&report.se, &report.ci, &report.p_values) {
            (Some(se), Some(ci), Some(p)) => writeln!(
                out,
                "{:<24} {:>14.8} {:>12.6} {:>14.8} {:>14.8} {:>12.4e}",
                name, estimate, se[j], ci[j][0], ci[j][1], p[j]
            )?,
            _ => writeln!(
                out,
                "{:<24} {:>14.8} {:>12} {:>14} {:>14} {:>12}",
                name, estimate, "n/a", "n/a", "n/a", "n/a"
            )?,
        }
    }
    Ok(())
}

fn run_simulate(args: SimulateArgs) -> Result<()> {
    let (preset_rows, preset_reps) = if args.full_scale { FULL_SCALE } else { DESK_SCALE };
    let n_total = args.n_total.unwrap_or(preset_rows);
    let b_reps = args.b.unwrap_or(preset_reps);

    let grid = parse_grid(&args.grid)?;
    let design = SimDesign::for_family(args.design, n_total, args.seed);
    let report = with_threads(args.threads, || {
        monte_carlo(&design, &grid, b_reps, args.level)
    })?;

    let stdout = std::io::stdout();
    report.write_csv(stdout.lock())?;
    if let Some(path) = &args.csv {
        report.write_csv(std::fs::File::create(path)?)?;
    }
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn run_msecurve(args: MsecurveArgs) -> Result<()> {
    let mut k_list = parse_count_list(&args.k_list)?;
    k_list.sort_unstable();
    k_list.dedup();

    let design = SimDesign::for_family(args.design, args.n_total, args.seed);
    let report = with_threads(args.threads, || {
        mse_curve(&design, args.n, &k_list, args.b)
    })?;

    let stdout = std::io::stdout();
    report.write_csv(stdout.lock())?;
    if let Some(path) = &args.csv {
        report.write_csv(std::fs::File::create(path)?)?;
    }
    if let Some(path) = &args.json {
        write_json(path, &report)?;
    }
    Ok(())
}

fn write_json(path: &PathBuf, value: &impl serde::Serialize) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| Error::invalid(format!("could not serialize report: {e}")))?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Run a closure inside a fixed-size worker pool when a cap is requested.
/// Results are identical either way; the cap only limits concurrency.
fn with_threads<T>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T>
where
    T: Send,
{
    match threads {
        None => f(),
        Some(0) => Err(Error::invalid("--threads must be at least 1")),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::invalid(format!("could not build worker pool: {e}")))?
            .install(f),
    }
}

// ---------------------------------------------------------------------------
// Grid grammar: "n=500,750,1000;K=50..250" — comma-separated values per
// axis, where "a..b" expands to five evenly spaced values and "a..b:s"
// steps from a to b by s.
// ---------------------------------------------------------------------------

fn parse_count_list(text: &str) -> Result<Vec<usize>> {
    let mut values = Vec::new();
    for item in text.split(',') {
        let item = item.trim();
        if item.is_empty() {
            return Err(Error::invalid(format!(
                "empty entry in list {text:?}"
            )));
        }
        match item.split_once("..") {
            None => values.push(parse_count(item)?),
            Some((start, rest)) => {
                let (end, step) = match rest.split_once(':') {
                    None => (rest, None),
                    Some((end, step)) => (end, Some(parse_count(step)?)),
                };
                let start = parse_count(start)?;
                let end = parse_count(end)?;
                if start >= end {
                    return Err(Error::invalid(format!(
                        "range {item:?} must have start < end"
                    )));
                }
                match step {
                    Some(0) => {
                        return Err(Error::invalid(format!(
                            "range {item:?} has a zero step"
                        )))
                    }
                    Some(s) => {
                        let mut v = start;
                        while v <= end {
                            values.push(v);
                            v += s;
                        }
                    }
                    None => {
                        // Five approximately evenly spaced values.
                        let span = (end - start) as f64;
                        for i in 0..5 {
                            let v = start as f64 + span * i as f64 / 4.0;
                            values.push(v.round() as usize);
                        }
                        values.dedup();
                    }
                }
            }
        }
    }
    if values.is_empty() {
        return Err(Error::invalid("empty value list"));
    }
    if values.iter().any(|&v| v == 0) {
        return Err(Error::invalid("counts must be at least 1"));
    }
    Ok(values)
}

fn parse_count(text: &str) -> Result<usize> {
    text.trim()
        .parse::<usize>()
        .map_err(|_| Error::invalid(format!("expected a positive integer, got {text:?}")))
}

/// Parse "n=LIST;K=LIST" into the cross product of the two axes.
fn parse_grid(text: &str) -> Result<Vec<(usize, usize)>> {
    let mut ns: Option<Vec<usize>> = None;
    let mut ks: Option<Vec<usize>> = None;
    for part in text.split(';') {
        let (key, list) = part.split_once('=').ok_or_else(|| {
            Error::invalid(format!(
                "grid part {part:?} is not of the form n=... or K=..."
            ))
        })?;
        let slot = match key.trim() {
            "n" | "N" => &mut ns,
            "k" | "K" => &mut ks,
            other => {
                return Err(Error::invalid(format!(
                    "unknown grid axis {other:?}; expected n or K"
                )))
            }
        };
        if slot.is_some() {
            return Err(Error::invalid(format!("grid axis {key:?} given twice")));
        }
        *slot = Some(parse_count_list(list)?);
    }
    let ns = ns.ok_or_else(|| Error::invalid("grid is missing the n=... axis"))?;
    let ks = ks.ok_or_else(|| Error::invalid("grid is missing the K=... axis"))?;
    let mut cells = Vec::with_capacity(ns.len() * ks.len());
    for &n in &ns {
        for &k in &ks {
            cells.push((n, k));
        }
    }
    Ok(cells)
}
