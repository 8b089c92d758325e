use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rhobar_cli::{cap_from_env, run_file, CliError, RunOptions, EXIT_NUMERIC};

#[derive(Parser)]
#[command(name = "rhobar", version, about = "Run rho-bar and stationary coupling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a config and write a JSON report.
    Run {
        config: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Directory for results.csv.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Overrides the seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads.
        #[arg(long)]
        jobs: Option<usize>,
    },
}

fn run(cmd: Command) -> Result<i32, CliError> {
    let Command::Run { config, out, csv, seed, jobs } = cmd;
    let opts = RunOptions { seed, jobs, cap: cap_from_env()? };
    let report = run_file(&config, &opts)?;
    let json = report.to_json();
    match out {
        Some(path) => std::fs::write(&path, json + "\n")
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?,
        None => println!("{json}"),
    }
    if let Some(dir) = csv {
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(format!("cannot create {}: {e}", dir.display())))?;
        let path = dir.join("results.csv");
        std::fs::write(&path, report.to_csv())
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
    }
    if report.all_checks_pass() {
        Ok(0)
    } else {
        eprintln!("failed checks: {}", report.failed_checks().join(", "));
        Ok(EXIT_NUMERIC)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
