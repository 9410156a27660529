//! `polylogit`: fit, compare and explore baseline-category logit models of
//! longitudinal categorical counts.
//!
//! Exit codes: 0 success, 2 data or schema error, 3 sampler failure,
//! 64 usage error, 1 anything else.

mod commands;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "polylogit", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit one model by MCMC and write draws, summaries, intervals and DIC.
    Fit(FitArgs),
    /// Fit several models to the same data and rank them by DIC.
    Compare(CompareArgs),
    /// Chi-square test, correspondence analysis and mean profiles.
    Explore(ExploreArgs),
    /// Generate a counts table from a simulation spec.
    Simulate(SimulateArgs),
    /// Re-summarize an existing draws file.
    Summarize(SummarizeArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    /// One line per observed behaviour event.
    Events,
    /// One line per (subject, week) with a column per category.
    Counts,
}

impl Format {
    fn name(self) -> &'static str {
        match self {
            Format::Events => "events",
            Format::Counts => "counts",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// JSON schema naming columns and pinning levels, categories and weeks.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Events)]
    format: Format,
}

#[derive(Args, Debug, Clone)]
pub struct SamplerArgs {
    #[arg(long)]
    chains: Option<usize>,
    /// Post-burn-in iterations per chain.
    #[arg(long)]
    iter: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for chains (0 = one per core). Does not affect results.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Output directory.
    #[arg(long, env = "POLYLOGIT_OUT", default_value = "polylogit-out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Preset name (`model1`, `model2`) or path to a model JSON file.
    #[arg(long, default_value = "model2")]
    model: String,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated presets or model JSON paths.
    #[arg(long, value_delimiter = ',', default_value = "model1,model2")]
    models: Vec<String>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
pub struct ExploreArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated factors defining the table rows; defaults to all
    /// factors crossed.
    #[arg(long, value_delimiter = ',')]
    group_by: Option<Vec<String>>,
    /// Also draw the biplot and profile charts.
    #[arg(long)]
    svg: bool,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Simulation spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the seed in the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Layout of the generated data file.
    #[arg(long, value_enum, default_value_t = Format::Counts)]
    format: Format,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Debug)]
pub struct SummarizeArgs {
    /// Draws CSV written by `fit`.
    #[arg(long)]
    draws: PathBuf,
    /// With `--model`, also recompute intervals and DIC against this data.
    #[arg(long, requires = "model")]
    data: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Events)]
    format: Format,
    #[arg(long)]
    model: Option<String>,
    #[command(flatten)]
    out: OutArgs,
}

/// A command failure with its exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
    Sampler(String),
    Other(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 64,
            Failure::Data(_) => 2,
            Failure::Sampler(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Sampler(m) | Failure::Other(m) => m,
        }
    }
}

impl From<polylogit::Error> for Failure {
    fn from(e: polylogit::Error) -> Self {
        use polylogit::Error as E;
        let msg = e.to_string();
        match e {
            E::Schema(_)
            | E::Data { .. }
            | E::Consistency(_)
            | E::DegenerateTable(_)
            | E::Csv(_)
            | E::Json(_)
            | E::Io(_) => Failure::Data(msg),
            E::Initialization(_) | E::NonFiniteDeviance(_) => Failure::Sampler(msg),
            _ => Failure::Other(msg),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Fit(a) => commands::fit(a),
        Command::Compare(a) => commands::compare(a),
        Command::Explore(a) => commands::explore(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Summarize(a) => commands::summarize(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
