//! `rbal`: generate synthetic tool populations, fit degradation models,
//! simulate inspection policies and report their costs.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rbal::{Error, Likelihood, Pooling};

#[derive(Parser)]
#[command(name = "rbal", version, about)]
struct Cli {
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sampler chains.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a synthetic population.
    Generate(GenerateArgs),
    /// Fit one pooling model to a dataset.
    Fit(FitArgs),
    /// Run inspection policies against the gold standard.
    Simulate(SimulateArgs),
    /// Tabulate simulation results.
    Report(ReportArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PoolingArg {
    Partial,
    None,
    Complete,
}

impl From<PoolingArg> for Pooling {
    fn from(p: PoolingArg) -> Self {
        match p {
            PoolingArg::Partial => Pooling::Partial,
            PoolingArg::None => Pooling::None,
            PoolingArg::Complete => Pooling::Complete,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
pub enum LikelihoodArg {
    Cauchy,
    Gaussian,
}

impl From<LikelihoodArg> for Likelihood {
    fn from(l: LikelihoodArg) -> Self {
        match l {
            LikelihoodArg::Cauchy => Likelihood::Cauchy,
            LikelihoodArg::Gaussian => Likelihood::Gaussian,
        }
    }
}

#[derive(Args)]
pub struct FitArgs {
    /// Dataset CSV; defaults to the config's dataset.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "partial")]
    pub pooling: PoolingArg,
    /// Defaults to the config's likelihood.
    #[arg(long, value_enum)]
    pub likelihood: Option<LikelihoodArg>,
    #[arg(long)]
    pub chains: Option<usize>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    /// Exit 0 even if some R-hat exceeds 1.05.
    #[arg(long)]
    pub allow_unconverged: bool,
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum PolicyArg {
    Periodic,
    Risk,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Dataset CSV; defaults to the config's dataset, else a synthetic draw.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Policies to run; the periodic baseline is always listed first.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "periodic,risk")]
    pub policies: Vec<PolicyArg>,
}

#[derive(Args)]
pub struct ReportArgs {
    /// Result files written by `simulate`.
    #[arg(required = true)]
    pub results: Vec<PathBuf>,
    /// Also write report.md and report.csv here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Exists(PathBuf),
    Unconverged(f64),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Exists(_) => 4,
            CliError::Unconverged(_) => 3,
            CliError::Core(e) => match e.root() {
                Error::Io(_) | Error::Csv(_) => 4,
                Error::Initialization(_)
                | Error::InferenceFailure { .. }
                | Error::NonFinite(_)
                | Error::InsufficientDraws(_) => 3,
                _ => 2,
            },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Exists(p) => write!(f, "{} exists; pass --force to overwrite", p.display()),
            CliError::Unconverged(r) => {
                write!(f, "max R-hat {r:.3} exceeds 1.05; pass --allow-unconverged to accept")
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = (|| {
        let loaded = config::load(cli.config.as_deref(), cli.seed)?;
        match &cli.command {
            Command::Generate(a) => commands::generate(&loaded, a, cli.force),
            Command::Fit(a) => commands::fit(&loaded, a, cli.force),
            Command::Simulate(a) => commands::simulate(&loaded, a, cli.force),
            Command::Report(a) => commands::report(&loaded, a, cli.force),
        }
    })();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
