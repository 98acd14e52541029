use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gaf::harness::{
    emit_csv, emit_quantiles_csv, grid_protocol, parse_libsvm, prepare, run, thread_pool, write_quantiles,
    write_reports, Algo, PreparedData, ProtocolConfig, RunConfig, DEFAULT_GRID,
};
use gaf::verify::{run_suite, CheckReport, Suite};
use gaf::{Error, VawTerm};

#[derive(Parser)]
#[command(name = "gaf", version, about = "Online multiclass logistic regression with a Gaussian aggregating forecaster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one algorithm at fixed hyperparameters over several seeds.
    Run(RunArgs),
    /// Tune each algorithm on a grid, then replicate the best point over all seeds.
    Grid(GridArgs),
    /// Run the numerical checks and print one CSV line per check.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct DataArgs {
    /// LIBSVM file.
    #[arg(long)]
    data: PathBuf,
    /// Permute rows with this seed before playing.
    #[arg(long)]
    shuffle: Option<u64>,
    /// Keep only the first N rows (after shuffling).
    #[arg(long)]
    max_rows: Option<usize>,
    /// Append a constant feature before scaling.
    #[arg(long)]
    bias: bool,
    /// Comparator radius B.
    #[arg(long = "B", default_value_t = 1.0)]
    b: f64,
    /// Rescale rows so the largest norm is R.
    #[arg(long = "R", default_value_t = 1.0)]
    r: f64,
    /// GAF smoothing level (default 1/n).
    #[arg(long)]
    mu: Option<f64>,
    /// Monte Carlo samples per GAF prediction.
    #[arg(long, default_value_t = 100)]
    m: usize,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Skip the comparator oracle (regret column becomes NaN).
    #[arg(long)]
    no_oracle: bool,
    #[arg(long, default_value_t = 1e-8)]
    oracle_tol: f64,
    /// Use the textbook ridge predictor `-(A + xxᵀ)⁻¹b/2` for vaw.
    #[arg(long)]
    vaw_quadratic: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    algo: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// ONS step parameter or OGD base step (default depends on the algorithm).
    #[arg(long)]
    eta: Option<f64>,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_delimiter = ',', default_value = "gaf,ons,ogd")]
    algos: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    grid_lambda: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_beta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    grid_eta: Option<Vec<f64>>,
    /// Seeds (taken from the front of --seeds) used for tuning.
    #[arg(long, default_value_t = 1)]
    tuning_seeds: usize,
    /// Quantile CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-seed CSV of the replicated runs.
    #[arg(long)]
    reports: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, default_value = "all")]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_)
            | Error::Dimension(_)
            | Error::InvalidInput(_)
            | Error::InvalidLabel { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::DegenerateData(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn load(args: &DataArgs) -> Result<PreparedData, Failure> {
    if !args.data.is_file() {
        return Err(Failure::Validation(format!("no such data file: {}", args.data.display())));
    }
    let mut ds = parse_libsvm(&args.data)?;
    if let Some(seed) = args.shuffle {
        ds = ds.shuffled(seed);
    }
    if let Some(n) = args.max_rows {
        ds = ds.truncated(n);
    }
    if args.bias {
        ds = ds.with_bias(1.0);
    }
    Ok(prepare(&ds, args.r)?)
}

fn base_config(algo: Algo, args: &DataArgs) -> RunConfig {
    RunConfig {
        radius: args.b,
        feature_bound: args.r,
        mu: args.mu,
        samples: args.m,
        seeds: args.seeds.clone(),
        oracle: !args.no_oracle,
        oracle_tol: args.oracle_tol,
        vaw_term: if args.vaw_quadratic { VawTerm::Quadratic } else { VawTerm::Linear },
        ..RunConfig::new(algo)
    }
}

fn cmd_run(args: RunArgs) -> Result<(), Failure> {
    let algo: Algo = args.algo.parse()?;
    let cfg = RunConfig {
        lambda: args.lambda,
        beta: args.beta,
        eta: args.eta,
        ..base_config(algo, &args.data)
    };
    cfg.validate()?;
    let data = load(&args.data)?;
    let reports = run(&cfg, &data)?;
    for r in &reports {
        eprintln!(
            "{} seed={} n={} final_avg_loss={:.6} regret={:.6}{}",
            r.algo,
            r.seed,
            r.len(),
            r.final_average_loss(),
            r.final_regret(),
            if r.regret_is_exact() || r.comparator.is_none() { "" } else { " (lower bound)" }
        );
    }
    match &args.out {
        Some(p) => emit_csv(&reports, p)?,
        None => write_reports(&reports, std::io::stdout().lock())?,
    }
    Ok(())
}

fn positive_list(name: &str, v: Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    let v = v.unwrap_or_else(|| DEFAULT_GRID.to_vec());
    if v.is_empty() || v.iter().any(|x| *x <= 0.0 || !x.is_finite()) {
        return Err(Failure::Validation(format!("--{name} needs positive values")));
    }
    Ok(v)
}

fn cmd_grid(args: GridArgs) -> Result<(), Failure> {
    let algos = args
        .algos
        .iter()
        .map(|a| a.parse())
        .collect::<Result<Vec<Algo>, Error>>()?;
    let cfg = ProtocolConfig {
        base: base_config(Algo::Gaf, &args.data),
        algos,
        grid_lambda: positive_list("grid-lambda", args.grid_lambda)?,
        grid_beta: positive_list("grid-beta", args.grid_beta)?,
        grid_eta: positive_list("grid-eta", args.grid_eta)?,
        tuning_seeds: args.tuning_seeds,
    };
    cfg.base.validate()?;
    let data = load(&args.data)?;
    let summaries = grid_protocol(&cfg, &data)?;
    for s in &summaries {
        eprintln!(
            "{} best lambda={} beta={} eta={} tuning_score={:.6} median_final_avg_loss={:.6}",
            s.algo,
            s.grid.best.lambda,
            s.grid.best.beta,
            s.grid.best.eta,
            s.grid.best_score,
            s.median_final_average_loss()
        );
    }
    let tables: Vec<_> = summaries.iter().map(|s| s.quantiles.clone()).collect();
    match &args.out {
        Some(p) => emit_quantiles_csv(&tables, p)?,
        None => write_quantiles(&tables, std::io::stdout().lock())?,
    }
    if let Some(p) = &args.reports {
        let all: Vec<_> = summaries.iter().flat_map(|s| s.reports.iter().cloned()).collect();
        emit_csv(&all, p)?;
    }
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<(), Failure> {
    let suite: Suite = args.suite.parse()?;
    let reports = run_suite(suite, args.seed)?;
    let mut text = format!("{}\n", CheckReport::CSV_HEADER);
    for r in &reports {
        text.push_str(&format!("{r}\n"));
    }
    match &args.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Failure::Runtime(e.to_string()))?,
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Runtime(e.to_string()))?,
    }
    let failed: Vec<_> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("checks failed: {}", failed.join(", "))))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let result = pool.install(|| match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Grid(a) => cmd_grid(a),
        Command::Verify(a) => cmd_verify(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
