mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "porelife", version, about = "Probabilistic fatigue lifetimes of porous structures")]
struct Cli {
    #[command(flatten)]
    common: CommonArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize porous element fields and a JSON manifest.
    Genfield(GenfieldArgs),
    /// Tabulate the stabilized-cycle criterion of element fields.
    Criterion(CriterionArgs),
    /// Fit strain-life parameters by maximum likelihood.
    Calibrate(CalibrateArgs),
    /// Pooled lifetime quantiles per load level.
    Wohler(WohlerArgs),
    /// Fit a homogenized model on multi-scale predictions and compare both.
    Homogenize(HomogenizeArgs),
}

#[derive(Debug, Args)]
pub struct GenfieldArgs {
    /// Number of realizations, seeded consecutively from the run seed.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Expected pore count per gauge section; 0 writes a pore-free bulk field.
    #[arg(long)]
    pub pores: Option<f64>,
    /// Iso-volume variant with the gauge radius divided by this factor.
    #[arg(long)]
    pub thin: Option<f64>,
    /// Concatenate this many copies of each field.
    #[arg(long)]
    pub tile: Option<usize>,
    /// Add the configured notch layer; also writes the pore-free notched field.
    #[arg(long)]
    pub notch: bool,
    /// File name prefix.
    #[arg(long, default_value = "field")]
    pub prefix: String,
}

#[derive(Debug, Args)]
pub struct CriterionArgs {
    /// Element field CSV files.
    #[arg(required = true)]
    pub fields: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
    UnknownPores,
    Joint,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub mode: Mode,
    /// Observation CSV; overrides `paths.observations`.
    #[arg(long)]
    pub observations: Option<PathBuf>,
    /// Non-porous observations for the homogeneous term of joint mode.
    #[arg(long)]
    pub reference_observations: Option<PathBuf>,
    /// Criterion tables; override `paths.tables`.
    #[arg(long, num_args = 1..)]
    pub tables: Vec<PathBuf>,
    /// Specimen volume of the homogeneous model, mm³; the configured gauge volume by default.
    #[arg(long)]
    pub volume: Option<f64>,
}

#[derive(Debug, Args)]
pub struct WohlerArgs {
    /// Strain-life parameters as JSON (a calibration result or a bare record).
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Criterion tables; override `paths.tables`.
    #[arg(num_args = 0..)]
    pub tables: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct HomogenizeArgs {
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Cylinder criterion tables; synthesized from the configuration when absent.
    #[arg(long, num_args = 1..)]
    pub cylinder: Vec<PathBuf>,
    /// Porous challenge tables; synthesized when absent.
    #[arg(long, num_args = 1..)]
    pub challenge: Vec<PathBuf>,
    /// Pore-free challenge table.
    #[arg(long)]
    pub challenge_homogeneous: Option<PathBuf>,
    /// Lifetime draws per level for the homogenized fit.
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.common.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.common.threads)
            .build_global()
            .map_err(|e| CliError::Validation(format!("thread pool: {e}")))?;
    }
    let mut config = match &cli.common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.common.seed {
        config.seed = seed;
    }
    std::fs::create_dir_all(&cli.common.out).map_err(CliError::io(&cli.common.out))?;
    let out = &cli.common.out;
    match &cli.command {
        Command::Genfield(a) => commands::genfield(&config, a, out),
        Command::Criterion(a) => commands::criterion(&config, a, out),
        Command::Calibrate(a) => commands::calibrate(&config, a, out),
        Command::Wohler(a) => commands::wohler(&config, a, out),
        Command::Homogenize(a) => commands::homogenize(&config, a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
