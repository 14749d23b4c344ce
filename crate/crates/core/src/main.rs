use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use neurofuse::app::config::{extract_overrides, RunConfig};
use neurofuse::app::{with_threads, AppError, Runner, StageOutcome};

/// Offline collaborative-BCI team simulation.
///
/// Any config key can be overridden with `--<dotted.key> <value>`, for
/// example `--cohort.master_seed 7`.
#[derive(Debug, Parser)]
#[command(name = "neurofuse", version)]
struct Cli {
    /// Config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Working directory; defaults to $NEUROFUSE_WORKDIR.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Re-run stages even when their inputs are unchanged.
    #[arg(long, global = true)]
    force: bool,
    /// Also write SVG accuracy charts in the report stage.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic cohort (trials.csv and epoch stores).
    Synth,
    /// Covariance features, oracle sweep and held-out predictions.
    Pipeline,
    /// Exhaustive team simulation.
    Simulate,
    /// Rescue-delta significance tests.
    Stats,
    /// Summary text and optional charts.
    Report,
    /// Every stage in order.
    RunAll,
    /// Print the resolved configuration.
    ShowConfig,
}

fn resolve(cli: &Cli, overrides: &[(String, String)]) -> Result<RunConfig, AppError> {
    let mut cfg = RunConfig::default();
    if let Ok(w) = std::env::var("NEUROFUSE_WORKDIR") {
        if !w.is_empty() {
            cfg.workdir = PathBuf::from(w);
        }
    }
    if let Some(p) = &cli.config {
        let text = std::fs::read_to_string(p).map_err(|source| AppError::Io {
            path: p.clone(),
            source,
        })?;
        cfg.apply_text(&text)?;
    }
    for (k, v) in overrides {
        cfg.set(k, v)?;
    }
    if let Some(w) = &cli.workdir {
        cfg.workdir = w.clone();
    }
    if cli.svg {
        cfg.report.svg = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli, overrides: Vec<(String, String)>) -> Result<(), AppError> {
    let cfg = resolve(&cli, &overrides)?;
    if let Command::ShowConfig = cli.command {
        print!("{}", cfg.render());
        return Ok(());
    }
    let force = cli.force;
    with_threads(cli.threads, move || {
        let mut runner = Runner::new(cfg, force)?;
        let outcomes = match cli.command {
            Command::Synth => vec![("synth", runner.synth()?)],
            Command::Pipeline => vec![("pipeline", runner.pipeline()?)],
            Command::Simulate => vec![("simulate", runner.simulate()?)],
            Command::Stats => vec![("stats", runner.stats()?)],
            Command::Report => vec![("report", runner.report()?)],
            Command::RunAll => runner.run_all()?,
            Command::ShowConfig => unreachable!(),
        };
        for (name, o) in &outcomes {
            match o {
                StageOutcome::Ran => eprintln!("{name}: done"),
                StageOutcome::Skipped => eprintln!("{name}: up to date"),
            }
        }
        if outcomes.iter().any(|(n, _)| *n == "report") {
            if let Some(s) = runner.summary() {
                print!("{s}");
            }
        }
        Ok(())
    })?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let (overrides, args) = match extract_overrides(std::env::args()) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli, overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
