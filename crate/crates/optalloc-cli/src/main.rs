//! `alloc` — optimal allocation of experimental units to the `2^K`
//! treatment combinations of a factorial design.
//!
//! Exit codes: 0 success, 2 schema/validation error, 3 infeasible
//! constraints, 4 closed-form conditions not met, 5 enumeration cap
//! exceeded.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use optalloc::Criterion;

mod commands;
mod data;
mod problem;
mod report;

use commands::Rendered;
use problem::ProblemFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] optalloc::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) => 2,
            CliError::Core(e) => match e {
                optalloc::Error::Infeasible(_) => 3,
                optalloc::Error::ConditionNotMet { .. } => 4,
                optalloc::Error::EnumerationTooLarge { .. } => 5,
                _ => 2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Exact,
    Greedy,
    Oracle,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Greedy => "greedy",
            Mode::Oracle => "oracle",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
enum OutputFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    A,
    D,
    E,
}

impl From<CriterionArg> for Criterion {
    fn from(c: CriterionArg) -> Self {
        match c {
            CriterionArg::A => Criterion::A,
            CriterionArg::D => Criterion::D,
            CriterionArg::E => Criterion::E,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "alloc",
    version,
    about = "A-, D- and E-optimal allocation for 2^K factorial experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct AllocArgs {
    /// Problem specification file (TOML).
    #[arg(long)]
    spec: PathBuf,
    /// exact closed form, greedy integer search, or exhaustive oracle.
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    mode: Mode,
    /// Override the spec file's criterion.
    #[arg(long, value_enum, ignore_case = true)]
    criterion: Option<CriterionArg>,
    /// Relative tolerance for the condition checks.
    #[arg(long)]
    tol: Option<f64>,
    /// Cap on the points the oracle may enumerate (default 1e8).
    #[arg(long)]
    cap: Option<u128>,
    #[arg(long, value_enum, default_value_t)]
    output: OutputFormat,
}

#[derive(Subcommand)]
enum Command {
    /// Allocate N units under complete randomization.
    Crd(AllocArgs),
    /// Allocate block by block under block randomization.
    Block(AllocArgs),
    /// Allocate a budget across treatments (closed form + floor rule).
    Cost(AllocArgs),
    /// Estimate group variances and factorial effects from pilot data.
    Estimate {
        /// Delimited pilot data with treatment and outcome columns.
        #[arg(long)]
        data: PathBuf,
        /// Number of factors.
        #[arg(long)]
        k: u32,
        /// Pool per-replicate variances (degrees-of-freedom weighted).
        #[arg(long)]
        pool: bool,
        #[arg(long, value_enum, default_value_t)]
        output: OutputFormat,
    },
    /// Draw randomizations from a potential-outcome matrix and compare
    /// exact and Monte-Carlo estimator moments.
    Simulate {
        /// Problem specification file (criterion, optional allocation).
        #[arg(long)]
        spec: PathBuf,
        /// Potential-outcome matrix (optional block column + J outcome columns).
        #[arg(long)]
        po: PathBuf,
        /// Monte-Carlo replicates.
        #[arg(long)]
        reps: u64,
        /// Master seed; replicate r reads stream r.
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t)]
        output: OutputFormat,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints its own message; usage problems are exit code 2.
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Core(optalloc::Error::ConditionNotMet { .. }) = &e {
                eprintln!("hint: rerun with --mode greedy");
            }
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (rendered, output) = match &cli.command {
        Command::Crd(args) => (
            commands::cmd_crd(
                &ProblemFile::load(&args.spec)?,
                args.mode,
                args.criterion.map(Criterion::from),
                args.tol,
                args.cap,
            )?,
            args.output,
        ),
        Command::Block(args) => (
            commands::cmd_block(
                &ProblemFile::load(&args.spec)?,
                args.mode,
                args.criterion.map(Criterion::from),
                args.tol,
                args.cap,
            )?,
            args.output,
        ),
        Command::Cost(args) => (
            commands::cmd_cost(
                &ProblemFile::load(&args.spec)?,
                args.mode,
                args.criterion.map(Criterion::from),
                args.tol,
            )?,
            args.output,
        ),
        Command::Estimate {
            data,
            k,
            pool,
            output,
        } => (commands::cmd_estimate(data, *k, *pool)?, *output),
        Command::Simulate {
            spec,
            po,
            reps,
            seed,
            output,
        } => (
            commands::cmd_simulate(&ProblemFile::load(spec)?, po, *reps, *seed)?,
            *output,
        ),
    };
    emit(&rendered, output);
    Ok(())
}

fn emit(rendered: &Rendered, output: OutputFormat) {
    match output {
        OutputFormat::Text => print!("{}", rendered.text),
        OutputFormat::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&rendered.json).expect("report serializes")
            );
        }
    }
}
