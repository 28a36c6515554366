use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use conjclt_cli::{execute, Command};

/// Conjugacy-class CLT experiments in free groups.
#[derive(Debug, Parser)]
#[command(name = "conjclt", version)]
struct Args {
    /// What to run.
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment config.
    config: PathBuf,
    /// Overrides `output_dir` from the config.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(args.command, &args.config, args.output_dir.as_deref()) {
        Ok(report) => {
            println!("{}", report.output_dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
