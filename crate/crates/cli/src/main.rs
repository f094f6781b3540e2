mod commands;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::CliError;

#[derive(Parser, Debug)]
#[command(name = "balflow", version, about = "Balanced-metric flow on Lie algebra models and the flat 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant checks of every module on a model and metric.
    Verify(VerifyArgs),
    /// Integrate the flow from a balanced metric.
    Flow(FlowArgs),
    /// Pseudo-spectral checks on the flat complex 2-torus.
    #[command(subcommand)]
    Torus(TorusCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// Model file (JSON).
    #[arg(long, conflicts_with = "preset")]
    pub model: Option<PathBuf>,
    /// Built-in model: iwasawa, torus1, torus2, torus3, solvable.
    #[arg(long)]
    pub preset: Option<String>,
    /// Metric override: a file or inline JSON with `[re, im]` entries.
    #[arg(long)]
    pub metric: Option<String>,
}

#[derive(Args, Debug)]
pub struct OutputArgs {
    /// Output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seed for the randomized checks.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for the algebraic residuals.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Final time; negative values integrate backwards.
    #[arg(long, allow_negative_numbers = true)]
    pub t_end: f64,
    /// Initial step, or the step with `--fixed-step`.
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Relative local error tolerance.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    #[arg(long)]
    pub fixed_step: bool,
    /// Add error columns against the Iwasawa closed forms.
    #[arg(long)]
    pub compare_exact: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Subcommand, Debug)]
enum TorusCommand {
    /// Residual of the Kähler reduction identity for one or more grid sizes.
    ReduceCheck(ReduceArgs),
    /// Explicit Calabi flow of a Fourier potential.
    Calabi(CalabiArgs),
}

#[derive(Args, Debug)]
pub struct ModesArgs {
    /// Fourier modes: a file or inline JSON list of `{k, amplitude, phase}`.
    #[arg(long)]
    pub modes: Option<String>,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    /// Grid sizes, comma separated.
    #[arg(long = "N", value_delimiter = ',', default_value = "12")]
    pub sizes: Vec<usize>,
    #[command(flatten)]
    pub modes: ModesArgs,
    /// Residual tolerance reported per grid size.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug)]
pub struct CalabiArgs {
    #[arg(long = "N", default_value_t = 12)]
    pub size: usize,
    #[command(flatten)]
    pub modes: ModesArgs,
    #[arg(long, default_value_t = 50)]
    pub steps: usize,
    /// Time step (defaults to the stability bound).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Evaluate the reduction residual every this many steps (0 disables it).
    #[arg(long, default_value_t = 1)]
    pub residual_every: usize,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            return commands::report_error(&CliError::usage(e.to_string()));
        }
    };
    let result = match cli.command {
        Command::Verify(args) => commands::verify(&args),
        Command::Flow(args) => commands::flow(&args),
        Command::Torus(TorusCommand::ReduceCheck(args)) => commands::reduce_check(&args),
        Command::Torus(TorusCommand::Calabi(args)) => commands::calabi(&args),
    };
    match result {
        Ok(code) => code,
        Err(e) => commands::report_error(&e),
    }
}
