use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use statecon::commands::{self, Options, Outcome, VariationOptions, BUNDLED};
use statecon::{CliError, CliResult, ProblemDocument};

#[derive(Parser)]
#[command(name = "statecon", version, about = "Check stationarity conditions for state-constrained optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Steps per interval.
    #[arg(long)]
    grid: Option<usize>,
    /// Master tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Override a declared parameter, k=v.
    #[arg(long = "param", num_args = 1..)]
    params: Vec<String>,
    /// Write a JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write CSV signals into this directory.
    #[arg(long)]
    csv_out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn options(&self) -> Options {
        Options {
            grid: self.grid,
            tol: self.tol,
            report: self.report.clone(),
            csv_out: self.csv_out.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct multipliers and check every condition.
    Verify {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Map the multipliers to the three-interval replicated problem and check it.
    ReduceB {
        problem: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Build admissible variations and check the pairing identity.
    Variation {
        problem: PathBuf,
        /// Variation profile as an expression in t (repeatable).
        #[arg(long)]
        kappa: Vec<String>,
        /// Add this many seeded random positive profiles.
        #[arg(long, default_value_t = 0)]
        random: usize,
        /// Bump centres per width in the nonnegative family.
        #[arg(long, default_value_t = 9)]
        bumps: usize,
        /// Step sizes for the difference-quotient ladder.
        #[arg(long, value_delimiter = ',', default_values_t = [1e-2, 1e-3, 1e-4])]
        eps: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run `verify` on a bundled problem.
    Example {
        /// One of atoms, density, noatom, smooth, sheared.
        name: String,
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> CliResult<Outcome> {
    match cli.command {
        Command::Verify { problem, common } => {
            let doc = ProblemDocument::load(&problem, &commands::parse_overrides(&common.params)?)?;
            commands::cmd_verify(doc, &common.options())
        }
        Command::ReduceB { problem, common } => {
            let doc = ProblemDocument::load(&problem, &commands::parse_overrides(&common.params)?)?;
            commands::cmd_reduce_b(doc, &common.options())
        }
        Command::Variation { problem, kappa, random, bumps, eps, common } => {
            let doc = ProblemDocument::load(&problem, &commands::parse_overrides(&common.params)?)?;
            if eps.iter().any(|e| e.is_nan() || *e <= 0.0) {
                return Err(CliError::Usage("--eps values must be positive".into()));
            }
            let v = VariationOptions { kappas: kappa, random, bump_centres: bumps, eps };
            commands::cmd_variation(doc, &common.options(), &v)
        }
        Command::Example { name, common } => {
            let text = commands::bundled(&name).ok_or_else(|| {
                CliError::Usage(format!("unknown example `{name}`; choose one of {}", BUNDLED.join(", ")))
            })?;
            let doc = ProblemDocument::parse(&format!("<{name}>"), text, &commands::parse_overrides(&common.params)?)?;
            commands::cmd_verify(doc, &common.options())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(o) => {
            print!("{}", o.summary);
            if o.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
