//! `fpdp`: analyze, verify and attack finite-precision noise mechanisms.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpdp_core::geometry::NormKind;

use commands::Outcome;
use config::RunConfig;

#[derive(Debug)]
pub enum CliError {
    /// Usage or configuration problem; exit code 1.
    Config(String),
    /// Reading or writing files; exit code 1.
    Io(String),
    /// The analysis cannot certify the configuration; exit code 2.
    Analysis(String),
}

impl CliError {
    pub fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Analysis(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Analysis(m) => write!(f, "analysis failed: {m}"),
        }
    }
}

impl From<fpdp_core::Error> for CliError {
    fn from(e: fpdp_core::Error) -> Self {
        use fpdp_core::Error as E;
        match e {
            E::DegenerateGrid { .. }
            | E::Divergence { .. }
            | E::NonConvergence { .. }
            | E::GridTooCoarse { .. }
            | E::ExceptionMassMismatch { .. } => CliError::Analysis(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "fpdp",
    version,
    about = "Finite-precision differential privacy toolkit"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when absent.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set model.n=1024`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    json: Option<PathBuf>,
    /// Write CSV plot data here.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Robustness budget with every intermediate quantity.
    Analyze,
    /// Exhaustive check of ε̂ against the certified level on answer pairs.
    Verify,
    /// Reproduce a rounding attack.
    #[command(subcommand)]
    Attack(AttackCommand),
    /// Draw reported answers through the generator model.
    Sample {
        /// True answer, comma separated for 2D.
        #[arg(
            long,
            value_delimiter = ',',
            allow_hyphen_values = true,
            required = true
        )]
        answer: Vec<f64>,
        /// Seed for reproducible draws; OS entropy when absent.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// W∞ distance between two distributions given as CSV atoms.
    Wasserstein {
        a: PathBuf,
        b: PathBuf,
        /// l1, l2 or linf.
        #[arg(long, default_value = "l2")]
        norm: String,
    },
    /// Run the configured query on a CSV dataset through the mechanism.
    Query {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
enum AttackCommand {
    /// Low-bit fingerprint attack on fixed-point Laplace noise.
    FixedPoint,
    /// Ratio inflation of the step-function output law.
    Step,
}

fn parse_norm(s: &str) -> Result<NormKind, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "l1" => Ok(NormKind::L1),
        "l2" => Ok(NormKind::L2),
        "linf" => Ok(NormKind::LInf),
        other => Err(CliError::Config(format!("unknown norm {other:?}"))),
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if cli.json.is_some() {
        cfg.output.json = cli.json;
    }
    if cli.csv.is_some() {
        cfg.output.csv = cli.csv;
    }
    match cli.command {
        Command::Analyze => commands::cmd_analyze(&cfg),
        Command::Verify => commands::cmd_verify(&cfg),
        Command::Attack(AttackCommand::FixedPoint) => commands::cmd_attack_fixed_point(&cfg),
        Command::Attack(AttackCommand::Step) => commands::cmd_attack_step(&cfg),
        Command::Sample {
            answer,
            seed,
            count,
        } => commands::cmd_sample(&cfg, &answer, seed, count),
        Command::Wasserstein { a, b, norm } => {
            commands::cmd_wasserstein(&cfg, &a, &b, parse_norm(&norm)?)
        }
        Command::Query { data, seed } => commands::cmd_query(&cfg, &data, seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
