use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gsnell::suite::Suite;
use gsnell_cli::run::{run_penalization_trace, run_properties, run_solve};
use gsnell_cli::{CliError, Outcome, Overrides, ScenarioConfig};

#[derive(Debug, Parser)]
#[command(
    name = "gsnell",
    version,
    about = "Generalized Snell envelopes on a binomial lattice"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Seed for randomized certificates and suites.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Stopping tolerance on the sup gap between penalized iterates.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Largest penalty in the schedule.
    #[arg(long = "max-n", global = true)]
    max_n: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and certify the envelope.
    Solve { config: PathBuf },
    /// Run a property suite on a scenario and random instances.
    Properties {
        config: PathBuf,
        /// corollary, comparison, coincidence, atom-split or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Tabulate the penalized iterates.
    Trace { config: PathBuf },
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
        path: path.clone(),
        source,
    })?;
    ScenarioConfig::from_json(&text)
}

fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let o = Overrides {
        seed: cli.seed,
        tol: cli.tol,
        max_n: cli.max_n,
    };
    match &cli.command {
        Command::Solve { config } => run_solve(&load(config)?, &o, &cli.out),
        Command::Properties { config, suite } => {
            let suite: Suite = suite
                .parse()
                .map_err(|_| CliError::field("--suite", format!("unknown suite '{suite}'")))?;
            run_properties(&load(config)?, suite, &o, &cli.out)
        }
        Command::Trace { config } => run_penalization_trace(&load(config)?, &o, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(outcome.status.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
