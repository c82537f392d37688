use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use eam_cli::config::{parse_config, RunConfig};
use eam_cli::runner;

/// Batch runner for the environment-assisted magnetometry toolkit.
#[derive(Parser)]
#[command(name = "eam", version, about)]
struct Cli {
    /// Run configuration file (sectioned `key = value` text).
    #[arg(long)]
    config: PathBuf,

    /// Output directory, overriding the config's `output` key.
    #[arg(long)]
    output: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,

    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

fn execute(cli: &Cli) -> Result<(), eam_cli::CliError> {
    let text = std::fs::read_to_string(&cli.config).map_err(eam_core::EamError::Io)?;
    let mut cfg: RunConfig = parse_config(&text)?;
    if let Some(out) = &cli.output {
        cfg.output = out.display().to_string();
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .ok();
    }
    let outcome = runner::run(&cfg)?;
    for artifact in &outcome.artifacts {
        println!("wrote {}", artifact.display());
    }
    Ok(())
}
