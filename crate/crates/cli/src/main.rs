use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use spdclab::config::CONFIG_ENV;
use spdclab::{load_config, run, write_outputs, CliError, Command};

/// Regenerates the theory side of the cavity-SPDC source figures.
#[derive(Debug, Parser)]
#[command(name = "spdclab", version)]
struct Args {
    /// What to compute.
    #[arg(value_enum)]
    command: Command,

    /// Config file; falls back to the shipped defaults.
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,

    /// Directory for the emitted files (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,

    /// `section.key=value`; may be repeated.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: Args) -> Result<(), CliError> {
    let mut overrides = args.overrides;
    if let Some(seed) = args.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    let config = load_config(args.config.as_deref(), &overrides)?;
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(vec![format!("--threads: {e}")]))?;
    }
    let files = run(args.command, &config)?;
    write_outputs(&args.out, &files)?;
    for f in &files {
        println!("{}", args.out.join(&f.name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spdclab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
