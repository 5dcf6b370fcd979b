use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fbl_qos::ErrorKind;

mod commands;
mod config;
mod output;

#[derive(Parser)]
#[command(name = "fblqos", version, about = "Effective capacity and QoS analysis for short-packet links")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Effective capacity over a θ grid by quadrature, Monte Carlo and Laplace.
    Ec(Opts),
    /// High-SNR slope of the normalized effective capacity.
    Slope(Opts),
    /// Service-rate, reliability and real-time gains for a blocklength schedule.
    Gains(Opts),
    /// Queue simulation checked against the large-deviation estimates.
    Simulate(Opts),
    /// Smallest error probability meeting a queue-violation target.
    Tradeoff(Opts),
    /// Admissibility of a blocklength schedule.
    Check(Opts),
}

#[derive(Args)]
pub struct Opts {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the config seed (Monte Carlo and simulation only).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points.
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, value_enum)]
    method: Option<Method>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Quadrature,
    Mc,
    Laplace,
    All,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(fbl_qos::Error),
    Io(String),
}

impl From<fbl_qos::Error> for CliError {
    fn from(e: fbl_qos::Error) -> Self {
        CliError::Core(e)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Precondition => 3,
                ErrorKind::Numeric => 4,
            },
            CliError::Io(_) => 1,
        }
    }
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (opts, f): (&Opts, fn(&config::RunConfig, &Opts) -> Result<output::Outputs, CliError>) = match &cli.cmd {
        Cmd::Ec(o) => (o, commands::ec),
        Cmd::Slope(o) => (o, commands::slope),
        Cmd::Gains(o) => (o, commands::gains),
        Cmd::Simulate(o) => (o, commands::simulate),
        Cmd::Tradeoff(o) => (o, commands::tradeoff),
        Cmd::Check(o) => (o, commands::check),
    };
    let cfg = config::load(&opts.config)?;
    let outputs = match opts.jobs {
        Some(0) => return Err(CliError::Config("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(|| f(&cfg, opts))?,
        None => f(&cfg, opts)?,
    };
    outputs.write_atomic(&opts.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("fblqos: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
