use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ep_annulus::commands::{run, Command};

/// Steady Euler-Poisson flows in a concentric cylinder.
#[derive(Parser)]
#[command(version)]
struct Cli {
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// output directory, overrides [output] dir
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(run(cli.command, &cli.config, cli.out.as_deref()) as u8)
}
