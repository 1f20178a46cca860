//! `liftcheck`: generate test programs, run lifter campaigns, report.
//!
//! Exit status: 0 when the command completed (whatever the lifters scored),
//! 1 for usage or configuration errors, 2 for infrastructure failures and
//! unavailable lifters.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{error, info, warn};

use liftcheck::config::{ConfigError, RunConfig};
use liftcheck::generator::{self, Generator, Manifest};
use liftcheck::pipeline::{self, CampaignError, PROGRAMS_DIR};
use liftcheck::report::{self, Format, Summary};
use liftcheck::selftest;
use liftcheck::toolchain::Toolchain;

#[derive(Debug, Parser)]
#[command(name = "liftcheck", version, about = "Differential testing of binary lifters")]
struct Cli {
    /// JSON configuration file
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Run directory holding programs, records and summaries
    #[arg(long, global = true, value_name = "DIR")]
    run_dir: Option<PathBuf>,

    /// Worker threads (default: available CPUs; overrides pipeline.workers)
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u32).range(1..))]
    workers: Option<u32>,

    /// Execution timeout in seconds (overrides toolchain.exec_timeout_secs)
    #[arg(long, global = true, value_name = "SECS")]
    timeout_secs: Option<f64>,

    /// Output format for tables: text, csv or json
    #[arg(long, global = true, value_name = "FORMAT", default_value = "text")]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate test programs into <run-dir>/programs
    Generate,
    /// Evaluate every configured lifter; resumes an interrupted run
    Run,
    /// Render the tables of a completed run
    Report,
    /// Run the built-in reference lifters and check their expected outcomes
    Selftest,
}

enum Failure {
    Usage(String),
    Infrastructure(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CampaignError> for Failure {
    fn from(e: CampaignError) -> Self {
        match e {
            CampaignError::ProgramsMismatch(_) => Failure::Usage(e.to_string()),
            _ => Failure::Infrastructure(e.to_string()),
        }
    }
}

fn load_config(cli: &Cli, fallback: impl FnOnce() -> RunConfig) -> Result<RunConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => fallback(),
    };
    if let Some(w) = cli.workers {
        config.pipeline.workers = Some(w as usize);
    }
    if let Some(t) = cli.timeout_secs {
        config.toolchain.exec_timeout_secs = t;
    }
    config.validate()?;
    Ok(config)
}

fn require_run_dir(cli: &Cli) -> Result<&Path, Failure> {
    cli.run_dir
        .as_deref()
        .ok_or_else(|| Failure::Usage("--run-dir is required for this command".into()))
}

fn print_summary(summary: &Summary, format: Format) {
    print!("{}", report::render(summary, format));
}

fn cmd_generate(cli: &Cli) -> Result<(), Failure> {
    let config = load_config(cli, RunConfig::default)?;
    let dir = require_run_dir(cli)?.join(PROGRAMS_DIR);
    let gen = Generator::new(config.generator.clone(), Toolchain::new(config.toolchain.clone()))
        .map_err(|e| Failure::Infrastructure(e.to_string()))?;
    let (programs, rejected) = gen
        .generate_batch(config.workers())
        .map_err(|e| Failure::Infrastructure(e.to_string()))?;
    if !rejected.is_empty() {
        info!("{} seeds rejected; see manifest", rejected.len());
    }
    let manifest = Manifest::new(&config.generator, &programs, rejected);
    generator::write_programs(&dir, &manifest, &programs)
        .map_err(|e| Failure::Infrastructure(format!("writing {}: {e}", dir.display())))?;
    println!("{}", dir.join(generator::MANIFEST_FILE).display());
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<bool, Failure> {
    let config = load_config(cli, RunConfig::default)?;
    if config.lifters.is_empty() {
        return Err(Failure::Usage("lifters: no lifters configured".into()));
    }
    let run_dir = require_run_dir(cli)?;
    let outcome = pipeline::run_campaign(&config, run_dir, config.workers())?;
    print_summary(&outcome.summary, cli.format);
    info!("summary written to {}", outcome.summary_path.display());
    if outcome.infrastructure_errors() > 0 {
        warn!("{} cells hit infrastructure errors; rerun to retry them", outcome.infrastructure_errors());
        return Ok(false);
    }
    Ok(true)
}

fn cmd_report(cli: &Cli) -> Result<(), Failure> {
    let run_dir = require_run_dir(cli)?;
    if !run_dir.is_dir() {
        return Err(Failure::Usage(format!("run directory {} does not exist", run_dir.display())));
    }
    let records = pipeline::load_records(run_dir).map_err(|e| Failure::Usage(e.to_string()))?;
    print_summary(&Summary::build(&records), cli.format);
    Ok(())
}

fn cmd_selftest(cli: &Cli) -> Result<bool, Failure> {
    let config = load_config(cli, RunConfig::selftest)?;
    let scratch;
    let run_dir = match &cli.run_dir {
        Some(d) => d.clone(),
        None => {
            scratch = tempfile::Builder::new()
                .prefix("liftcheck-selftest")
                .tempdir()
                .map_err(|e| Failure::Infrastructure(e.to_string()))?;
            scratch.path().to_path_buf()
        }
    };
    let outcome = pipeline::run_campaign(&config, &run_dir, config.workers())?;
    print_summary(&outcome.summary, cli.format);
    let problems = selftest::violations(&config, &outcome.summary, &outcome.records);
    for p in &problems {
        error!("selftest: {p}");
    }
    if problems.is_empty() {
        info!("selftest passed ({} records)", outcome.records.len());
    }
    Ok(problems.is_empty())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Generate => cmd_generate(&cli).map(|_| true),
        Command::Run => cmd_run(&cli),
        Command::Report => cmd_report(&cli).map(|_| true),
        Command::Selftest => cmd_selftest(&cli),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(Failure::Usage(msg)) => {
            error!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Infrastructure(msg)) => {
            error!("{msg}");
            ExitCode::from(2)
        }
    }
}
