//! Test program generation.
//!
//! Every emitted [`TestProgram`] fits the token budget, is not trivial, and
//! has been compiled and executed at O0 and O3 with agreeing checksums.

pub mod builtin;
pub mod csmith;
pub mod scan;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;

use log::warn;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::toolchain::{ExecutionResult, OptLevel, TargetLanguage, Toolchain, ToolchainError};

pub use scan::{count_tokens, is_trivial};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ExternalCsmith,
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub seed_start: u64,
    pub program_count: usize,
    pub token_budget: usize,
    pub min_statements: usize,
    pub backend: Backend,
    pub csmith_path: Option<PathBuf>,
    /// Extra arguments for Csmith; defaults to [`csmith::DEFAULT_FLAGS`].
    pub csmith_flags: Option<Vec<String>>,
    pub max_retries_per_slot: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            seed_start: 0,
            program_count: 1024,
            token_budget: 8192,
            min_statements: 20,
            backend: Backend::Builtin,
            csmith_path: None,
            csmith_flags: None,
            max_retries_per_slot: 64,
        }
    }
}

impl GenerationConfig {
    /// Checks field-level invariants, naming the offending field.
    pub fn validate(&self) -> Result<(), String> {
        if self.token_budget == 0 {
            return Err("generator.token_budget: must be positive".into());
        }
        if self.program_count == 0 {
            return Err("generator.program_count: must be at least 1".into());
        }
        if self.min_statements == 0 {
            return Err("generator.min_statements: must be positive".into());
        }
        if self.max_retries_per_slot == 0 {
            return Err("generator.max_retries_per_slot: must be positive".into());
        }
        if self.backend == Backend::ExternalCsmith && self.csmith_path.is_none() {
            return Err("generator.csmith_path: required for the external-csmith backend".into());
        }
        Ok(())
    }

    pub fn csmith_flags(&self) -> Vec<String> {
        self.csmith_flags
            .clone()
            .unwrap_or_else(|| csmith::DEFAULT_FLAGS.iter().map(|s| s.to_string()).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Csmith,
    Builtin,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestProgram {
    pub id: String,
    pub seed: u64,
    pub source: String,
    pub token_count: usize,
    pub origin: Origin,
}

impl TestProgram {
    pub fn id_for_seed(seed: u64) -> String {
        format!("prog_{seed}")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.source.as_bytes()))
    }

    pub fn file_name(&self) -> String {
        format!("{}.c", self.id)
    }
}

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("generator backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no program within {budget} tokens after {attempts} attempts from seed {seed}")]
    BudgetUnsatisfiable { seed: u64, budget: usize, attempts: usize },
    #[error("seed {seed}: O0/O3 self-check failed: {detail}")]
    SelfCheckFailed { seed: u64, detail: String },
    #[error("seed {seed}: {attempts} consecutive rejections, last: {last}")]
    RetriesExhausted { seed: u64, attempts: usize, last: String },
    #[error("toolchain error: {0}")]
    Toolchain(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// Why a single seed did not yield a program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Rejection {
    OverBudget { tokens: usize },
    Trivial,
    SelfCheck(String),
}

impl std::fmt::Display for Rejection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Rejection::OverBudget { tokens } => write!(f, "over budget ({tokens} tokens)"),
            Rejection::Trivial => f.write_str("trivial"),
            Rejection::SelfCheck(d) => write!(f, "self-check failed: {d}"),
        }
    }
}

/// Logged event for a seed that was skipped during generation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedSeed {
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Generator {
    config: GenerationConfig,
    toolchain: Toolchain,
}

impl Generator {
    /// Fails with `BackendUnavailable` if Csmith is configured but cannot be
    /// executed.
    pub fn new(config: GenerationConfig, toolchain: Toolchain) -> Result<Self, GenerateError> {
        config.validate().map_err(GenerateError::BackendUnavailable)?;
        if config.backend == Backend::ExternalCsmith {
            let path = config.csmith_path.as_deref().expect("validated");
            csmith::probe(path).map_err(GenerateError::BackendUnavailable)?;
        }
        Ok(Generator { config, toolchain })
    }

    pub fn config(&self) -> &GenerationConfig {
        &self.config
    }

    fn raw_source(&self, seed: u64) -> Result<(String, Origin), GenerateError> {
        match self.config.backend {
            Backend::Builtin => Ok((builtin::generate(seed).source, Origin::Builtin)),
            Backend::ExternalCsmith => {
                let path = self.config.csmith_path.as_deref().expect("validated");
                let src = csmith::generate(path, seed, &self.config.csmith_flags())?;
                Ok((src, Origin::Csmith))
            }
        }
    }

    /// Compiles at O0 and O3, runs both, and requires equal checksums.
    pub fn self_check(&self, id: &str, source: &str) -> Result<u32, String> {
        let mut sums = Vec::with_capacity(2);
        for opt in OptLevel::ALL {
            let artifact = self.toolchain.compile(id, source, opt, TargetLanguage::C).map_err(|e| match e {
                ToolchainError::Compile { diagnostic } => format!("{opt} compile error: {}", first_line(&diagnostic)),
                other => other.to_string(),
            })?;
            match self.toolchain.execute(&artifact, self.toolchain.exec_timeout()) {
                ExecutionResult::Checksum { value } => sums.push(value),
                other => return Err(format!("{opt} execution: {other:?}")),
            }
        }
        if sums[0] != sums[1] {
            return Err(format!("O0 checksum {:X} != O3 checksum {:X}", sums[0], sums[1]));
        }
        Ok(sums[0])
    }

    /// Tries exactly one seed.
    pub fn try_seed(&self, seed: u64) -> Result<Result<TestProgram, Rejection>, GenerateError> {
        let (source, origin) = self.raw_source(seed)?;
        let tokens = count_tokens(&source);
        if tokens > self.config.token_budget {
            return Ok(Err(Rejection::OverBudget { tokens }));
        }
        if is_trivial(&source, self.config.min_statements) {
            return Ok(Err(Rejection::Trivial));
        }
        let id = TestProgram::id_for_seed(seed);
        if let Err(detail) = self.self_check(&id, &source) {
            return Ok(Err(Rejection::SelfCheck(detail)));
        }
        Ok(Ok(TestProgram {
            id,
            seed,
            source,
            token_count: tokens,
            origin,
        }))
    }

    /// Returns the first valid program at `seed` or a following seed, giving
    /// up after `max_retries_per_slot` attempts.
    pub fn generate_program(&self, seed: u64) -> Result<TestProgram, GenerateError> {
        let attempts = self.config.max_retries_per_slot;
        let mut last = None;
        for k in 0..attempts as u64 {
            let s = seed + k;
            match self.try_seed(s)? {
                Ok(p) => return Ok(p),
                Err(r) => {
                    warn!("seed {s} rejected: {r}");
                    last = Some(r);
                }
            }
        }
        Err(exhausted(seed, attempts, self.config.token_budget, last))
    }

    /// Walks seeds upward from `seed_start` until `program_count` programs are
    /// accepted. Seeds are tried speculatively in parallel chunks, but
    /// acceptance is strictly in seed order, so the result does not depend on
    /// `workers`.
    pub fn generate_batch(&self, workers: usize) -> Result<(Vec<TestProgram>, Vec<RejectedSeed>), GenerateError> {
        let workers = workers.max(1);
        let mut accepted = Vec::with_capacity(self.config.program_count);
        let mut rejected = Vec::new();
        let mut next = self.config.seed_start;
        let mut streak = 0usize;
        let mut streak_start = next;
        while accepted.len() < self.config.program_count {
            let chunk: Vec<u64> = (next..next + workers as u64).collect();
            let results: Vec<_> = thread::scope(|s| {
                let handles: Vec<_> = chunk.iter().map(|&seed| s.spawn(move || self.try_seed(seed))).collect();
                handles.into_iter().map(|h| h.join().expect("generator worker panicked")).collect()
            });
            for (seed, result) in chunk.into_iter().zip(results) {
                next = seed + 1;
                match result? {
                    Ok(p) => {
                        accepted.push(p);
                        streak = 0;
                        if accepted.len() == self.config.program_count {
                            break;
                        }
                    }
                    Err(r) => {
                        if let Rejection::SelfCheck(_) = r {
                            warn!("seed {seed}: {r}");
                        }
                        rejected.push(RejectedSeed {
                            seed,
                            reason: r.to_string(),
                        });
                        if streak == 0 {
                            streak_start = seed;
                        }
                        streak += 1;
                        if streak >= self.config.max_retries_per_slot {
                            return Err(exhausted(streak_start, streak, self.config.token_budget, Some(r)));
                        }
                    }
                }
            }
        }
        Ok((accepted, rejected))
    }

    pub fn toolchain(&self) -> &Toolchain {
        &self.toolchain
    }
}

fn exhausted(seed: u64, attempts: usize, budget: usize, last: Option<Rejection>) -> GenerateError {
    match last {
        Some(Rejection::OverBudget { .. }) | None => GenerateError::BudgetUnsatisfiable {
            seed,
            budget,
            attempts,
        },
        Some(Rejection::SelfCheck(detail)) => GenerateError::SelfCheckFailed { seed, detail },
        Some(r @ Rejection::Trivial) => GenerateError::RetriesExhausted {
            seed,
            attempts,
            last: r.to_string(),
        },
    }
}

fn first_line(s: &str) -> &str {
    s.lines().find(|l| l.contains("error")).or_else(|| s.lines().next()).unwrap_or("")
}

/// One entry of `manifest.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub seed: u64,
    pub token_count: usize,
    pub origin: Origin,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub generator: String,
    pub backend: Backend,
    pub token_budget: usize,
    pub min_statements: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub csmith_flags: Vec<String>,
    pub programs: Vec<ManifestEntry>,
    #[serde(default)]
    pub rejected: Vec<RejectedSeed>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new(config: &GenerationConfig, programs: &[TestProgram], rejected: Vec<RejectedSeed>) -> Self {
        Manifest {
            generator: match config.backend {
                Backend::Builtin => builtin::BUILTIN_VERSION.to_string(),
                Backend::ExternalCsmith => "csmith".to_string(),
            },
            backend: config.backend,
            token_budget: config.token_budget,
            min_statements: config.min_statements,
            csmith_flags: match config.backend {
                Backend::ExternalCsmith => config.csmith_flags(),
                Backend::Builtin => Vec::new(),
            },
            programs: programs
                .iter()
                .map(|p| ManifestEntry {
                    id: p.id.clone(),
                    seed: p.seed,
                    token_count: p.token_count,
                    origin: p.origin,
                    sha256: p.sha256(),
                })
                .collect(),
            rejected,
        }
    }
}

/// Writes `prog_<seed>.c` files and `manifest.json` into `dir`.
pub fn write_programs(dir: &Path, manifest: &Manifest, programs: &[TestProgram]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for p in programs {
        fs::write(dir.join(p.file_name()), &p.source)?;
    }
    let json = serde_json::to_string_pretty(manifest).map_err(io::Error::other)?;
    fs::write(dir.join(MANIFEST_FILE), json + "\n")
}

/// Loads programs listed in `dir/manifest.json`, verifying content hashes.
pub fn read_programs(dir: &Path) -> io::Result<(Manifest, Vec<TestProgram>)> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    let mut programs = Vec::with_capacity(manifest.programs.len());
    for entry in &manifest.programs {
        let source = fs::read_to_string(dir.join(format!("{}.c", entry.id)))?;
        let program = TestProgram {
            id: entry.id.clone(),
            seed: entry.seed,
            token_count: count_tokens(&source),
            source,
            origin: entry.origin,
        };
        if program.sha256() != entry.sha256 {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}: content hash does not match manifest", entry.id),
            ));
        }
        programs.push(program);
    }
    Ok((manifest, programs))
}
