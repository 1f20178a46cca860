//! Resumable campaign over every (program, lifter, opt level) cell.
//!
//! Run directory layout:
//!
//! * `programs/` with the sources and `manifest.json`
//! * `records.jsonl`, append-only, one record per cell
//! * `run_meta.json` with tool versions, flags and seeds
//! * `summary.json` and `boxplot.json`, rebuilt from the records at the end

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, OnceLock};
use std::thread;

use log::{info, warn};
use serde::Serialize;
use thiserror::Error;

use super::store::{self, RecordLog, RECORDS_FILE};
use super::{establish_ground_truth, evaluate_one, CellKey, EvalContext, EvaluationRecord, GroundTruth, Outcome, Terminal};
use crate::config::RunConfig;
use crate::generator::{self, GenerateError, Generator, Manifest, TestProgram};
use crate::lifters::{self, Health, LifterSpec};
use crate::report::{self, Summary};
use crate::toolchain::{OptLevel, Toolchain};

pub const PROGRAMS_DIR: &str = "programs";
pub const SUMMARY_FILE: &str = "summary.json";
pub const BOXPLOT_FILE: &str = "boxplot.json";
pub const META_FILE: &str = "run_meta.json";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("lifter {lifter} is unavailable: {reason}")]
    LifterUnavailable { lifter: String, reason: String },
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error("{0}")]
    ProgramsMismatch(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

fn io_err(context: impl Into<String>) -> impl FnOnce(io::Error) -> CampaignError {
    let context = context.into();
    move |source| CampaignError::Io { context, source }
}

#[derive(Debug, Serialize)]
pub struct RunMeta<'a> {
    pub tool: String,
    pub compilers: Vec<(String, String)>,
    pub config: &'a RunConfig,
    pub generator: String,
    pub seeds: Vec<u64>,
    pub csmith_flags: Vec<String>,
    pub correlation_population: &'static str,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub summary: Summary,
    pub records: Vec<EvaluationRecord>,
    /// Cells evaluated by this invocation (the rest were resumed).
    pub evaluated: usize,
    pub summary_path: PathBuf,
}

impl RunOutcome {
    pub fn infrastructure_errors(&self) -> usize {
        self.summary.infrastructure_errors
    }
}

/// Counting semaphore bounding concurrent lifts per lifter.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Gate {
            free: Mutex::new(n),
            cv: Condvar::new(),
        }
    }

    fn enter(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|p| p.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|p| p.into_inner());
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|p| p.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

/// Fails fast if any lifter cannot be reached.
pub fn check_lifters(lifters: &[LifterSpec]) -> Result<(), CampaignError> {
    for spec in lifters {
        if let Health::Unavailable(reason) = lifters::health_check(spec) {
            return Err(CampaignError::LifterUnavailable {
                lifter: spec.name.clone(),
                reason,
            });
        }
    }
    Ok(())
}

/// Reuses `dir/manifest.json` when it matches the configuration, otherwise
/// generates and writes a fresh program set.
pub fn load_or_generate(
    config: &RunConfig,
    toolchain: &Toolchain,
    dir: &Path,
    workers: usize,
) -> Result<(Manifest, Vec<TestProgram>), CampaignError> {
    if dir.join(generator::MANIFEST_FILE).is_file() {
        let (manifest, programs) =
            generator::read_programs(dir).map_err(io_err(format!("reading {}", dir.display())))?;
        let gen = &config.generator;
        let first_seed = programs.first().map(|p| p.seed);
        let mut differing = Vec::new();
        if manifest.backend != gen.backend {
            differing.push("backend");
        }
        if manifest.token_budget != gen.token_budget {
            differing.push("token_budget");
        }
        if manifest.min_statements != gen.min_statements {
            differing.push("min_statements");
        }
        if programs.len() != gen.program_count {
            differing.push("program_count");
        }
        if first_seed.is_some_and(|s| s != gen.seed_start) {
            differing.push("seed_start");
        }
        if !differing.is_empty() {
            return Err(CampaignError::ProgramsMismatch(format!(
                "{} was generated with different generator settings ({}); use a fresh run directory",
                dir.display(),
                differing.join(", ")
            )));
        }
        info!("reusing {} programs from {}", programs.len(), dir.display());
        return Ok((manifest, programs));
    }
    let gen = Generator::new(config.generator.clone(), toolchain.clone())?;
    info!("generating {} programs", config.generator.program_count);
    let (programs, rejected) = gen.generate_batch(workers)?;
    let manifest = Manifest::new(&config.generator, &programs, rejected);
    generator::write_programs(dir, &manifest, &programs).map_err(io_err(format!("writing {}", dir.display())))?;
    Ok((manifest, programs))
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), CampaignError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(io_err(format!("writing {}", path.display())))
}

struct Cell {
    program: usize,
    opt: usize,
    lifter: usize,
}

/// Evaluates every configured cell not already recorded in `run_dir`, then
/// rebuilds the summary from the full record set.
pub fn run_campaign(config: &RunConfig, run_dir: &Path, workers: usize) -> Result<RunOutcome, CampaignError> {
    let workers = workers.max(1);
    check_lifters(&config.lifters)?;
    fs::create_dir_all(run_dir).map_err(io_err(format!("creating {}", run_dir.display())))?;

    let toolchain = Toolchain::new(config.toolchain.clone());
    let (manifest, programs) = load_or_generate(config, &toolchain, &run_dir.join(PROGRAMS_DIR), workers)?;

    let meta = RunMeta {
        tool: format!("liftcheck {}", env!("CARGO_PKG_VERSION")),
        compilers: toolchain.versions(),
        config,
        generator: manifest.generator.clone(),
        seeds: programs.iter().map(|p| p.seed).collect(),
        csmith_flags: manifest.csmith_flags.clone(),
        correlation_population: report::POPULATION,
    };
    let meta_json = serde_json::to_string_pretty(&meta).expect("meta serialises") + "\n";
    write_atomic(&run_dir.join(META_FILE), &meta_json)?;

    let records_path = run_dir.join(RECORDS_FILE);
    let mut done = store::load(&records_path).map_err(io_err(format!("reading {}", records_path.display())))?;
    let log = RecordLog::open(&records_path).map_err(io_err(format!("opening {}", records_path.display())))?;

    let opts = &config.pipeline.opt_levels;
    let lifters = &config.lifters;
    let key = |c: &Cell| CellKey {
        program_id: programs[c.program].id.clone(),
        lifter: lifters[c.lifter].name.clone(),
        opt_level: opts[c.opt],
    };
    let mut all = Vec::new();
    for program in 0..programs.len() {
        for opt in 0..opts.len() {
            for lifter in 0..lifters.len() {
                all.push(Cell { program, opt, lifter });
            }
        }
    }
    let pending: Vec<&Cell> = all
        .iter()
        .filter(|c| done.get(&key(c)).is_none_or(|r| r.terminal() == Terminal::Infrastructure))
        .collect();
    info!(
        "{} cells total, {} already recorded, {} to evaluate with {workers} workers",
        all.len(),
        all.len() - pending.len(),
        pending.len()
    );

    let truths: Vec<OnceLock<Result<Arc<GroundTruth>, String>>> =
        (0..programs.len() * opts.len()).map(|_| OnceLock::new()).collect();
    let gates: Vec<Gate> = lifters
        .iter()
        .map(|l| Gate::new(l.max_concurrency.unwrap_or(usize::MAX)))
        .collect();
    let ctx = EvalContext {
        toolchain: &toolchain,
        weights: &config.metrics.codebleu_weights,
    };
    let next = AtomicUsize::new(0);
    let finished = AtomicUsize::new(0);
    let fresh: Mutex<Vec<EvaluationRecord>> = Mutex::new(Vec::with_capacity(pending.len()));
    let write_failure: Mutex<Option<io::Error>> = Mutex::new(None);

    thread::scope(|s| {
        for _ in 0..workers.min(pending.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(cell) = pending.get(i) else { break };
                if write_failure.lock().unwrap_or_else(|p| p.into_inner()).is_some() {
                    break;
                }
                let program = &programs[cell.program];
                let opt: OptLevel = opts[cell.opt];
                let spec = &lifters[cell.lifter];
                let truth = truths[cell.program * opts.len() + cell.opt]
                    .get_or_init(|| establish_ground_truth(&toolchain, program, opt).map(Arc::new));
                let record = match truth {
                    Ok(truth) => {
                        let _slot = gates[cell.lifter].enter();
                        evaluate_one(&ctx, program, spec, truth)
                    }
                    Err(why) => EvaluationRecord {
                        program_id: program.id.clone(),
                        lifter: spec.name.clone(),
                        opt_level: opt,
                        outcome: Outcome::new(Terminal::Infrastructure, why.clone()),
                        reference_checksum: None,
                        lifted_checksum: None,
                        similarity: None,
                        timings: Default::default(),
                    },
                };
                if record.terminal() == Terminal::Infrastructure {
                    warn!("{}/{}/{}: {}", record.program_id, record.lifter, opt, record.outcome.detail);
                }
                if let Err(e) = log.append(&record) {
                    *write_failure.lock().unwrap_or_else(|p| p.into_inner()) = Some(e);
                    break;
                }
                fresh.lock().unwrap_or_else(|p| p.into_inner()).push(record);
                let n = finished.fetch_add(1, Ordering::Relaxed) + 1;
                if n.is_multiple_of(50) || n == pending.len() {
                    info!("{n}/{} cells evaluated", pending.len());
                }
            });
        }
    });
    if let Some(e) = write_failure.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(io_err(format!("appending to {}", log.path().display()))(e));
    }

    let fresh = fresh.into_inner().unwrap_or_else(|p| p.into_inner());
    let evaluated = fresh.len();
    for r in fresh {
        done.insert(r.key(), r);
    }
    let wanted: BTreeMap<CellKey, ()> = all.iter().map(|c| (key(c), ())).collect();
    let records: Vec<EvaluationRecord> = done.into_iter().filter(|(k, _)| wanted.contains_key(k)).map(|(_, r)| r).collect();

    let summary = Summary::build(&records);
    let summary_path = run_dir.join(SUMMARY_FILE);
    write_atomic(&summary_path, &summary.to_json())?;
    let boxplot = serde_json::to_string_pretty(&report::boxplot_export(&records)).expect("export serialises") + "\n";
    write_atomic(&run_dir.join(BOXPLOT_FILE), &boxplot)?;

    Ok(RunOutcome {
        summary,
        records,
        evaluated,
        summary_path,
    })
}

/// Rebuilds summary data from an existing run directory without running
/// anything.
pub fn load_records(run_dir: &Path) -> Result<Vec<EvaluationRecord>, CampaignError> {
    let path = run_dir.join(RECORDS_FILE);
    if !path.is_file() {
        return Err(CampaignError::Io {
            context: format!("reading {}", path.display()),
            source: io::Error::new(io::ErrorKind::NotFound, "no records in run directory"),
        });
    }
    let map = store::load(&path).map_err(io_err(format!("reading {}", path.display())))?;
    Ok(map.into_values().collect())
}
