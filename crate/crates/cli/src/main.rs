use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use ada_ogd_cli::config::{ExperimentConfig, Mode};
use ada_ogd_cli::error::{CliError, CliResult};
use ada_ogd_cli::runner::run_experiment;

/// Experiment runner for the adaptive query answering mechanism.
#[derive(Parser, Debug)]
#[command(name = "ada-ogd", version)]
struct Args {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,

    /// Override the config's mode (aq | pso | dsq | replay-verify | theory-check).
    #[arg(long)]
    mode: Option<String>,

    /// Override the seed list, comma-separated.
    #[arg(long)]
    seeds: Option<String>,

    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Worker pool size (fallback: env ADA_OGD_WORKERS, then config, then
    /// available cores).
    #[arg(long)]
    workers: Option<usize>,

    /// Per-run progress lines and debug CSVs.
    #[arg(long)]
    verbose: bool,
}

fn parse_seeds(raw: &str) -> CliResult<Vec<u64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|e| CliError::validation("seeds", format!("bad seed `{s}`: {e}")))
        })
        .collect()
}

fn resolve_workers(args: &Args, config: &ExperimentConfig) -> usize {
    args.workers
        .or_else(|| {
            std::env::var("ADA_OGD_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .or(config.workers)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get().min(8))
                .unwrap_or(1)
        })
}

fn run(args: Args) -> CliResult<bool> {
    let mut config = ExperimentConfig::from_file(&args.config)?;
    if let Some(mode) = &args.mode {
        config.mode = Mode::parse(mode)?;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = parse_seeds(seeds)?;
    }
    if let Some(out) = &args.out {
        config.out_dir = out.clone();
    }
    let config = config.resolve()?;
    let workers = resolve_workers(&args, &config);

    let report = run_experiment(&config, workers, args.verbose)?;
    if args.verbose {
        for line in &report.messages {
            println!("{line}");
        }
    }
    print!("{}", report.summary.to_table());
    println!("artifacts: {}", report.out_dir.display());
    if !report.all_ok {
        for line in &report.messages {
            eprintln!("{line}");
        }
    }
    Ok(report.all_ok)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more asserted properties failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
