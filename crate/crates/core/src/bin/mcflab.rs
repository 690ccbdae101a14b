use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use mcflab::cli;

#[derive(Parser)]
#[command(name = "mcflab", version, about = "Mean curvature flow lab for submanifolds of space forms")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a verification suite: oracles, residuals, invariants or convergence.
    Verify {
        #[arg(long)]
        suite: String,
    },
    /// Run an experiment once per value of a dotted config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<String>,
        /// Write the combined CSV here instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut stdout = std::io::stdout();
    let code = match args.command {
        Command::Run { config } => cli::cmd_run(&config, &mut stdout),
        Command::Verify { suite } => cli::cmd_verify(&suite, &mut stdout),
        Command::Sweep {
            config,
            param,
            values,
            output,
        } => cli::cmd_sweep(&config, &param, &values, output.as_deref(), &mut stdout),
    };
    ExitCode::from(code as u8)
}
