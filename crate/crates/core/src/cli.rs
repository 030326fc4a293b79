//! Command-line interface: fitting, tuning, the three experiment protocols,
//! and the randomized invariant suite.
//!
//! Exit codes: 0 success, 1 invariant or computation failure, 2 usage error,
//! 3 I/O error. A config file of `key = value` lines can supply defaults for
//! any value flag; explicit flags win. All randomness flows from `--seed`
//! (default 42).

use std::collections::HashMap;
use std::fs;

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::dataio::{load_design_csv, load_design_response_csv, ResponseSelector};
use crate::error::Error;
use crate::estimator::{self, DEFAULT_LAMBDA_L_COUNT, DEFAULT_LAMBDA_R_COUNT};
use crate::invariants::{run_suite, PenaltyRule};
use crate::lasso::{fit_lasso, LassoSettings};
use crate::linalg::normalize_columns;
use crate::refit::{default_lambda_r, refit_closed_form};
use crate::report::{render_csv, render_text, OutputFormat};
use crate::rng::Rng;
use crate::simulate::{
    run_real_data, run_scenario, run_semi_synthetic, BetaCase, BetaScheme, ImprovementReport,
    RealDataSpec, ScenarioConfig, SemiSyntheticSpec,
};
use crate::tuning::cross_validate;

/// Seed used when none is supplied.
pub const DEFAULT_SEED: u64 = 42;

const EXIT_FAILURE: i32 = 1;
const EXIT_USAGE: i32 = 2;
const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "lasso-ridge",
    version,
    about = "Lasso fitting with ridge refitting on the active set, plus benchmark protocols"
)]
struct Cli {
    /// Config file of `key = value` lines supplying defaults for value flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print progress to stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the Lasso at one penalty and report its optimality certificate.
    Fit(FitArgs),
    /// Fit the Lasso, then apply the ridge correction on its active set.
    Refit(RefitArgs),
    /// Cross-validate an estimator strategy and report the error surface.
    Cv(CvArgs),
    /// Run synthetic AR(1) benchmark scenarios.
    Simulate(SimulateArgs),
    /// Fixed-design protocol: synthetic sparse truth on a design from file.
    SemiSynthetic(SemiSyntheticArgs),
    /// Repeated train/test splits of an observed design and response.
    RealData(RealDataArgs),
    /// Run the randomized certificate suite; exit 1 on any violation.
    CheckInvariants(CheckArgs),
}

#[derive(Args, Debug)]
struct TableInput {
    /// CSV containing predictors and the response column.
    #[arg(long)]
    design: Option<PathBuf>,
    /// Response column, by header name or 0-based index.
    #[arg(long)]
    response: Option<String>,
    /// Treat the first row as data, not a header.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args, Debug)]
struct OutputArgs {
    /// Output path (stdout when omitted).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Output format: csv or text.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    table: TableInput,
    /// First-stage penalty.
    #[arg(long)]
    lambda_l: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct RefitArgs {
    #[command(flatten)]
    table: TableInput,
    /// First-stage penalty.
    #[arg(long)]
    lambda_l: Option<f64>,
    /// Second-stage penalty (default: smallest safe value).
    #[arg(long)]
    lambda_r: Option<f64>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct CvArgs {
    #[command(flatten)]
    table: TableInput,
    /// Estimator strategy name.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_l_count: Option<usize>,
    #[arg(long)]
    lambda_r_count: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Predictor counts, comma separated.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<usize>>,
    /// Number of nonzero true coefficients.
    #[arg(long)]
    s: Option<usize>,
    /// AR(1) correlation of the design rows.
    #[arg(long)]
    rho: Option<f64>,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Replications per cell.
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate prediction error on a fresh design instead of in-sample.
    #[arg(long)]
    out_of_sample: bool,
    /// Give the two estimators independent CV fold assignments.
    #[arg(long)]
    separate_cv_folds: bool,
    #[arg(long)]
    lambda_l_count: Option<usize>,
    #[arg(long)]
    lambda_r_count: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct SemiSyntheticArgs {
    /// Design-only CSV (no response column).
    #[arg(long)]
    design: Option<PathBuf>,
    #[arg(long)]
    no_header: bool,
    /// Signal structure: 1, 2, or 3.
    #[arg(long)]
    beta_case: Option<String>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_l_count: Option<usize>,
    #[arg(long)]
    lambda_r_count: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct RealDataArgs {
    #[command(flatten)]
    table: TableInput,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    rounds: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lambda_l_count: Option<usize>,
    #[arg(long)]
    lambda_r_count: Option<usize>,
    #[command(flatten)]
    out: OutputArgs,
}

#[derive(Args, Debug)]
struct CheckArgs {
    /// Number of random instances.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// CLI failure carrying its exit code.
enum CliError {
    Usage(String),
    Io(String),
    Failure(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Io(_) => EXIT_IO,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Failure(m) => m,
        }
    }
}

/// Classifies a library error by exit code. Parameter problems are usage
/// errors; file problems are I/O; everything else is a computation failure.
fn classify(e: Error) -> CliError {
    if e.is_io() {
        return CliError::Io(e.to_string());
    }
    match e {
        Error::InvalidParameter(_)
        | Error::Config { .. }
        | Error::UnknownEstimator(_)
        | Error::DegenerateGrid => CliError::Usage(e.to_string()),
        other => CliError::Failure(other.to_string()),
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Flat `key = value` config file; `#` starts a comment line.
fn load_config(path: &Path) -> CliResult<HashMap<String, String>> {
    let text = fs::read_to_string(path).map_err(|e| {
        CliError::Io(format!("cannot read config {}: {e}", path.display()))
    })?;
    let mut map = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let Some((key, value)) = trimmed.split_once('=') else {
            return Err(usage(format!(
                "config file {}, line {}: expected `key = value`",
                path.display(),
                lineno + 1
            )));
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Fills a missing flag from the config map, parsing to the flag's type.
fn fill<T: FromStr>(
    slot: &mut Option<T>,
    cfg: &HashMap<String, String>,
    key: &str,
) -> CliResult<()> {
    if slot.is_none() {
        if let Some(raw) = cfg.get(key) {
            let parsed = raw
                .parse::<T>()
                .map_err(|_| usage(format!("config key {key:?}: cannot parse {raw:?}")))?;
            *slot = Some(parsed);
        }
    }
    Ok(())
}

fn fill_list(
    slot: &mut Option<Vec<usize>>,
    cfg: &HashMap<String, String>,
    key: &str,
) -> CliResult<()> {
    if slot.is_none() {
        if let Some(raw) = cfg.get(key) {
            let parsed: std::result::Result<Vec<usize>, _> =
                raw.split(',').map(|v| v.trim().parse::<usize>()).collect();
            *slot = Some(parsed.map_err(|_| {
                usage(format!("config key {key:?}: cannot parse {raw:?} as a list"))
            })?);
        }
    }
    Ok(())
}

fn fill_path(
    slot: &mut Option<PathBuf>,
    cfg: &HashMap<String, String>,
    key: &str,
) -> CliResult<()> {
    if slot.is_none() {
        if let Some(raw) = cfg.get(key) {
            *slot = Some(PathBuf::from(raw));
        }
    }
    Ok(())
}

fn parse_format(out: &OutputArgs) -> CliResult<OutputFormat> {
    match &out.format {
        None => Ok(OutputFormat::Csv),
        Some(raw) => OutputFormat::parse(raw)
            .ok_or_else(|| usage(format!("--format must be csv or text, got {raw:?}"))),
    }
}

fn write_output(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(p) => fs::write(p, content)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
    }
}

fn load_table(table: &TableInput) -> CliResult<(ndarray::Array2<f64>, Vec<f64>)> {
    let design = table
        .design
        .as_ref()
        .ok_or_else(|| usage("--design is required"))?;
    let response = table
        .response
        .as_ref()
        .ok_or_else(|| usage("--response is required (column name or 0-based index)"))?;
    let selector = ResponseSelector::parse(response);
    load_design_response_csv(design, !table.no_header, &selector).map_err(classify)
}

fn require_positive(name: &str, value: f64) -> CliResult<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(usage(format!("{name} must be strictly positive, got {value}")))
    }
}

fn emit(reports: &[ImprovementReport], out: &OutputArgs) -> CliResult<()> {
    let format = parse_format(out)?;
    let content = match format {
        OutputFormat::Csv => render_csv(reports),
        OutputFormat::Text => render_text(reports),
    };
    write_output(out.output.as_deref(), &content)
}

fn run_fit(mut args: FitArgs, cfg: &HashMap<String, String>) -> CliResult<()> {
    fill_path(&mut args.table.design, cfg, "design")?;
    fill(&mut args.table.response, cfg, "response")?;
    fill(&mut args.lambda_l, cfg, "lambda-l")?;
    let lambda_l = args
        .lambda_l
        .ok_or_else(|| usage("--lambda-l is required"))?;
    require_positive("--lambda-l", lambda_l)?;

    let (raw, y) = load_table(&args.table)?;
    let x = normalize_columns(&raw).map_err(classify)?;
    let fit = fit_lasso(&x, &y, lambda_l, &LassoSettings::default()).map_err(classify)?;

    let mut content = String::from("column,beta,selected,sign\n");
    for j in 0..x.p() {
        let pos = fit.active_set.iter().position(|&e| e == j);
        content.push_str(&format!(
            "{},{},{},{}\n",
            j + 1,
            fit.beta[j],
            pos.is_some(),
            pos.map(|i| fit.signs[i].to_string())
                .unwrap_or_else(|| String::from("NA")),
        ));
    }
    write_output(args.out.output.as_deref(), &content)?;
    eprintln!(
        "lambda_l={} |E|={} kkt_slack={:.3e} iterations={} converged={}",
        fit.lambda,
        fit.active_set.len(),
        fit.kkt_slack,
        fit.iterations,
        fit.converged
    );
    if !fit.converged {
        return Err(CliError::Failure(String::from(
            "solver did not converge; results reported above",
        )));
    }
    Ok(())
}

fn run_refit(mut args: RefitArgs, cfg: &HashMap<String, String>) -> CliResult<()> {
    fill_path(&mut args.table.design, cfg, "design")?;
    fill(&mut args.table.response, cfg, "response")?;
    fill(&mut args.lambda_l, cfg, "lambda-l")?;
    fill(&mut args.lambda_r, cfg, "lambda-r")?;
    let lambda_l = args
        .lambda_l
        .ok_or_else(|| usage("--lambda-l is required"))?;
    require_positive("--lambda-l", lambda_l)?;
    if let Some(lr) = args.lambda_r {
        require_positive("--lambda-r", lr)?;
    }

    let (raw, y) = load_table(&args.table)?;
    let x = normalize_columns(&raw).map_err(classify)?;
    let fit = fit_lasso(&x, &y, lambda_l, &LassoSettings::default()).map_err(classify)?;
    let lambda_r = match args.lambda_r {
        Some(lr) => lr,
        None => default_lambda_r(&x, &fit.active_set).map_err(classify)?,
    };
    let refit = refit_closed_form(&x, &fit, lambda_r).map_err(classify)?;

    let mut content = String::from("column,beta_lasso,delta,beta_refit,selected,sign\n");
    for j in 0..x.p() {
        let pos = fit.active_set.iter().position(|&e| e == j);
        content.push_str(&format!(
            "{},{},{},{},{},{}\n",
            j + 1,
            fit.beta[j],
            refit.delta[j],
            refit.beta_r[j],
            pos.is_some(),
            pos.map(|i| fit.signs[i].to_string())
                .unwrap_or_else(|| String::from("NA")),
        ));
    }
    write_output(args.out.output.as_deref(), &content)?;
    eprintln!(
        "lambda_l={} lambda_r={} min_safe_lambda_r={} safe={} |E|={} converged={}",
        fit.lambda,
        refit.lambda_r,
        refit.min_safe_lambda_r,
        refit.safe,
        fit.active_set.len(),
        fit.converged
    );
    Ok(())
}

fn run_cv(mut args: CvArgs, cfg: &HashMap<String, String>) -> CliResult<()> {
    fill_path(&mut args.table.design, cfg, "design")?;
    fill(&mut args.table.response, cfg, "response")?;
    fill(&mut args.estimator, cfg, "estimator")?;
    fill(&mut args.folds, cfg, "folds")?;
    fill(&mut args.seed, cfg, "seed")?;
    fill(&mut args.lambda_l_count, cfg, "lambda-l-count")?;
    fill(&mut args.lambda_r_count, cfg, "lambda-r-count")?;

    let name = args.estimator.as_deref().unwrap_or("lasso-ridge");
    let lambda_l_count = args.lambda_l_count.unwrap_or(DEFAULT_LAMBDA_L_COUNT);
    let lambda_r_count = args.lambda_r_count.unwrap_or(DEFAULT_LAMBDA_R_COUNT);
    // Grid-size overrides apply to the built-in strategies; anything else is
    // looked up in the registry as-is (and rejects unknown names).
    let estimator: Box<dyn estimator::Estimator> = match name {
        "lasso" => Box::new(estimator::LassoEstimator { lambda_l_count }),
        "lasso-ridge" => Box::new(estimator::LassoRidgeEstimator {
            lambda_l_count,
            lambda_r_count,
        }),
        other => estimator::create(other).map_err(classify)?,
    };

    let (raw, y) = load_table(&args.table)?;
    let x = normalize_columns(&raw).map_err(classify)?;
    let grid = estimator.build_grid(&x, &y).map_err(classify)?;
    let folds = args.folds.unwrap_or(5);
    let mut rng = Rng::new(args.seed.unwrap_or(DEFAULT_SEED), 0);
    let result = cross_validate(
        &x,
        &y,
        &grid,
        folds,
        &mut rng,
        estimator.as_ref(),
        &LassoSettings::default(),
    )
    .map_err(classify)?;

    let mut content = String::from("lambda_l,lambda_r,mean_validation_mse\n");
    for (il, &ll) in grid.lambda_l_values.iter().enumerate() {
        if grid.lambda_r_values.is_empty() {
            content.push_str(&format!("{},NA,{}\n", ll, result.cv_error_surface[[il, 0]]));
        } else {
            for (ir, &lr) in grid.lambda_r_values.iter().enumerate() {
                content.push_str(&format!(
                    "{},{},{}\n",
                    ll,
                    lr,
                    result.cv_error_surface[[il, ir]]
                ));
            }
        }
    }
    write_output(args.out.output.as_deref(), &content)?;
    eprintln!(
        "estimator={} best_lambda_l={} best_lambda_r={} non_converged_cells={} final_converged={}",
        estimator.name(),
        result.best_lambda_l,
        result
            .best_lambda_r
            .map(|v| v.to_string())
            .unwrap_or_else(|| String::from("NA")),
        result.non_converged.len(),
        result.final_converged
    );
    Ok(())
}

fn run_simulate(mut args: SimulateArgs, cfg: &HashMap<String, String>, verbose: u8) -> CliResult<()> {
    fill_list(&mut args.n, cfg, "n")?;
    fill_list(&mut args.p, cfg, "p")?;
    fill(&mut args.s, cfg, "s")?;
    fill(&mut args.rho, cfg, "rho")?;
    fill(&mut args.sigma, cfg, "sigma")?;
    fill(&mut args.reps, cfg, "reps")?;
    fill(&mut args.folds, cfg, "folds")?;
    fill(&mut args.seed, cfg, "seed")?;
    fill(&mut args.lambda_l_count, cfg, "lambda-l-count")?;
    fill(&mut args.lambda_r_count, cfg, "lambda-r-count")?;

    let ns = args.n.unwrap_or_else(|| vec![100]);
    let ps = args.p.unwrap_or_else(|| vec![100]);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);

    let mut reports = Vec::new();
    let mut cell_index = 0u64;
    for &n in &ns {
        for &p in &ps {
            let mut scenario =
                ScenarioConfig::new(n, p, args.s.unwrap_or(5), args.rho.unwrap_or(0.0), args.sigma.unwrap_or(1.0));
            scenario.replications = args.reps.unwrap_or(100);
            scenario.folds = args.folds.unwrap_or(5);
            // one seed per cell, all derived from --seed
            scenario.seed = seed ^ cell_index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
            scenario.beta_scheme = BetaScheme::UnitFirstS;
            scenario.shared_cv_folds = !args.separate_cv_folds;
            scenario.out_of_sample = args.out_of_sample;
            scenario.lambda_l_count = args.lambda_l_count.unwrap_or(DEFAULT_LAMBDA_L_COUNT);
            scenario.lambda_r_count = args.lambda_r_count.unwrap_or(DEFAULT_LAMBDA_R_COUNT);
            scenario.validate().map_err(classify)?;
            if verbose > 0 {
                eprintln!("running {}", scenario.label());
            }
            reports.push(run_scenario(&scenario).map_err(classify)?);
            cell_index += 1;
        }
    }
    emit(&reports, &args.out)
}

fn run_semi(mut args: SemiSyntheticArgs, cfg: &HashMap<String, String>, verbose: u8) -> CliResult<()> {
    fill_path(&mut args.design, cfg, "design")?;
    fill(&mut args.beta_case, cfg, "beta-case")?;
    fill(&mut args.noise_sd, cfg, "noise-sd")?;
    fill(&mut args.train_fraction, cfg, "train-fraction")?;
    fill(&mut args.rounds, cfg, "rounds")?;
    fill(&mut args.folds, cfg, "folds")?;
    fill(&mut args.seed, cfg, "seed")?;
    fill(&mut args.lambda_l_count, cfg, "lambda-l-count")?;
    fill(&mut args.lambda_r_count, cfg, "lambda-r-count")?;

    let design_path = args.design.ok_or_else(|| usage("--design is required"))?;
    let case = BetaCase::parse(args.beta_case.as_deref().unwrap_or("1")).map_err(classify)?;
    let design = load_design_csv(&design_path, !args.no_header).map_err(classify)?;

    let mut spec = SemiSyntheticSpec::new(design, case);
    spec.design_label = design_path.display().to_string();
    spec.noise_sd = args.noise_sd.unwrap_or(1.0);
    spec.train_fraction = args.train_fraction.unwrap_or(0.7);
    spec.rounds = args.rounds.unwrap_or(100);
    spec.folds = args.folds.unwrap_or(5);
    spec.seed = args.seed.unwrap_or(DEFAULT_SEED);
    spec.lambda_l_count = args.lambda_l_count.unwrap_or(DEFAULT_LAMBDA_L_COUNT);
    spec.lambda_r_count = args.lambda_r_count.unwrap_or(DEFAULT_LAMBDA_R_COUNT);
    if verbose > 0 {
        eprintln!(
            "semi-synthetic: {} rounds on {}x{} design, case {case:?}",
            spec.rounds,
            spec.design.nrows(),
            spec.design.ncols()
        );
    }
    let report = run_semi_synthetic(&spec).map_err(classify)?;
    emit(&[report], &args.out)
}

fn run_real(mut args: RealDataArgs, cfg: &HashMap<String, String>, verbose: u8) -> CliResult<()> {
    fill_path(&mut args.table.design, cfg, "design")?;
    fill(&mut args.table.response, cfg, "response")?;
    fill(&mut args.train_fraction, cfg, "train-fraction")?;
    fill(&mut args.rounds, cfg, "rounds")?;
    fill(&mut args.folds, cfg, "folds")?;
    fill(&mut args.seed, cfg, "seed")?;
    fill(&mut args.lambda_l_count, cfg, "lambda-l-count")?;
    fill(&mut args.lambda_r_count, cfg, "lambda-r-count")?;

    let (design, response) = load_table(&args.table)?;
    let label = args
        .table
        .design
        .as_ref()
        .map(|p| p.display().to_string())
        .unwrap_or_else(|| String::from("real-data"));

    let mut spec = RealDataSpec::new(design, response);
    spec.label = label;
    spec.train_fraction = args.train_fraction.unwrap_or(0.7);
    spec.rounds = args.rounds.unwrap_or(100);
    spec.folds = args.folds.unwrap_or(5);
    spec.seed = args.seed.unwrap_or(DEFAULT_SEED);
    spec.lambda_l_count = args.lambda_l_count.unwrap_or(DEFAULT_LAMBDA_L_COUNT);
    spec.lambda_r_count = args.lambda_r_count.unwrap_or(DEFAULT_LAMBDA_R_COUNT);
    if verbose > 0 {
        eprintln!("real-data: {} rounds on {}", spec.rounds, spec.label);
    }
    let report = run_real_data(&spec).map_err(classify)?;
    emit(&[report], &args.out)
}

fn run_check(mut args: CheckArgs, cfg: &HashMap<String, String>) -> CliResult<()> {
    fill(&mut args.count, cfg, "count")?;
    fill(&mut args.seed, cfg, "seed")?;
    let count = args.count.unwrap_or(500);
    if count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let seed = args.seed.unwrap_or(DEFAULT_SEED);

    let report = run_suite(count, seed, PenaltyRule::GridPoint);
    for info in &report.informational {
        println!("info: {info}");
    }
    for violation in &report.violations {
        println!("VIOLATION {violation}");
    }
    for error in &report.errors {
        println!("ERROR {error}");
    }
    println!(
        "checked {} instances: {} violations, {} errors, {} informational",
        report.instances,
        report.violations.len(),
        report.errors.len(),
        report.informational.len()
    );
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Failure(String::from("invariant suite failed")))
    }
}

/// Parses arguments and dispatches; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();

    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("error: --threads must be at least 1");
            return EXIT_USAGE;
        }
        // Ignore the error when a pool already exists (tests call run() twice).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }

    let cfg = match &cli.config {
        Some(path) => match load_config(path) {
            Ok(map) => map,
            Err(e) => {
                eprintln!("error: {}", e.message());
                return e.code();
            }
        },
        None => HashMap::new(),
    };

    let outcome = match cli.command {
        Command::Fit(args) => run_fit(args, &cfg),
        Command::Refit(args) => run_refit(args, &cfg),
        Command::Cv(args) => run_cv(args, &cfg),
        Command::Simulate(args) => run_simulate(args, &cfg, cli.verbose),
        Command::SemiSynthetic(args) => run_semi(args, &cfg, cli.verbose),
        Command::RealData(args) => run_real(args, &cfg, cli.verbose),
        Command::CheckInvariants(args) => run_check(args, &cfg),
    };

    match outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.code()
        }
    }
}
