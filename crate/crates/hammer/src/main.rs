use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use hammer::{HammerConfig, Mode, Pattern, Runner};
use tracing_subscriber::EnvFilter;

/// Writes, reads and lists a grid of synthetic fields from many sessions at
/// once and reports the bandwidth of each phase.
#[derive(Parser, Debug)]
#[command(name = "hammer", version)]
struct Args {
    /// Phase to run when no pattern is given.
    #[arg(long, value_enum, default_value = "write")]
    mode: Mode,
    /// Contention pattern; runs its write and read phases instead of --mode.
    #[arg(long, value_enum)]
    pattern: Option<Pattern>,
    #[arg(long, default_value_t = 4)]
    nparams: u32,
    #[arg(long, default_value_t = 4)]
    nlevels: u32,
    #[arg(long, default_value_t = 5)]
    nsteps: u32,
    /// Writer nodes, one ensemble member each.
    #[arg(long, default_value_t = 2)]
    nensembles: u32,
    /// Sessions per node.
    #[arg(long, default_value_t = 1)]
    sessions: u32,
    /// Bytes per field.
    #[arg(long, default_value_t = 1 << 20)]
    field_size: usize,
    /// Check every retrieved field bit for bit.
    #[arg(long)]
    verify: bool,
    #[arg(long, default_value_t = 3)]
    reps: u32,
    /// Grid passes per session in the repeated pattern.
    #[arg(long, default_value_t = 3)]
    iterations: u32,
    /// Store configuration file.
    #[arg(long, required_unless_present = "worker")]
    config: Option<PathBuf>,
    /// CSV report; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run sessions as threads of this process instead of worker processes.
    #[arg(long)]
    threads: bool,
    #[arg(long, hide = true)]
    worker: Option<String>,
}

fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let args = Args::parse();
    if let Some(spec) = &args.worker {
        println!("{}", hammer::worker_main(spec)?);
        return Ok(());
    }

    let cfg = HammerConfig {
        nparams: args.nparams,
        nlevels: args.nlevels,
        nsteps: args.nsteps,
        nensembles: args.nensembles,
        sessions: args.sessions,
        field_size: args.field_size,
        pattern: args.pattern,
        mode: args.mode,
        verify: args.verify,
        repetitions: args.reps,
        iterations: args.iterations,
    };
    let exe = if args.threads { None } else { Some(std::env::current_exe()?) };
    let config = args.config.expect("clap requires --config");
    let runner = Runner::open(cfg, &config, exe)?;
    let reports = runner.run()?;

    match &args.out {
        Some(path) => {
            let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            hammer::write_csv(f, &reports)?;
        }
        None => hammer::write_csv(std::io::stdout().lock(), &reports)?,
    }
    for s in hammer::summarize(&reports) {
        eprintln!(
            "{:<7} mean {:>12.3} MiB/s  stddev {:>10.3} MiB/s  ({} reps)",
            s.phase,
            s.float.mean / (1 << 20) as f64,
            s.float.std_dev() / (1 << 20) as f64,
            s.float.count
        );
    }
    let failures: u64 = reports.iter().map(|r| r.failures()).sum();
    if failures > 0 {
        let first = reports.iter().find_map(|r| r.first_failure()).unwrap_or("unknown");
        anyhow::bail!("verification failed {failures} times; first: {first}");
    }
    Ok(())
}
