use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sopf_cli::commands::{cmd_compare, cmd_export, cmd_solve, cmd_verify, Exit};
use sopf_cli::config::{Flags, RunConfig};
use sopf_core::formulation::ModelKind;

/// Stochastic DC optimal power flow with post-contingency line switching.
#[derive(Parser)]
#[command(name = "sopf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the selected models and write dispatch, prices and violations
    Solve {
        #[command(flatten)]
        flags: Flags,
    },
    /// Solve all four models and write cost and market comparison tables
    Compare {
        #[command(flatten)]
        flags: Flags,
    },
    /// Write the selected models (default: all) as MPS files
    ExportMps {
        #[command(flatten)]
        flags: Flags,
    },
    /// Check a `name value` solution file against one model
    Verify {
        /// solution file, one `name value` pair per line
        #[arg(long)]
        solution: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
}

fn run(command: Command, out: &mut String) -> anyhow::Result<Exit> {
    match command {
        Command::Solve { flags } => cmd_solve(&RunConfig::resolve(flags, &[])?, out),
        Command::Compare { flags } => {
            let mut cfg = RunConfig::resolve(flags, &ModelKind::ALL)?;
            cfg.models = ModelKind::ALL.to_vec();
            cmd_compare(&cfg, out)
        }
        Command::ExportMps { flags } => cmd_export(&RunConfig::resolve(flags, &ModelKind::ALL)?, out),
        Command::Verify { solution, flags } => cmd_verify(&RunConfig::resolve(flags, &[])?, &solution, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut out = String::new();
    let code = match run(cli.command, &mut out) {
        Ok(exit) => exit,
        Err(e) => {
            eprintln!("error: {e:#}");
            Exit::Input
        }
    };
    print!("{out}");
    ExitCode::from(code as u8)
}
