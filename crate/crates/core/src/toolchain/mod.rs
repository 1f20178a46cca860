//! Compilation at fixed optimisation levels, assembly emission for round-trip
//! comparison, and sandboxed execution with checksum extraction.

pub mod process;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use tempfile::TempDir;
use thiserror::Error;

use process::{Environment, Invocation, Termination};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptLevel {
    O0,
    O3,
}

impl OptLevel {
    pub const ALL: [OptLevel; 2] = [OptLevel::O0, OptLevel::O3];

    pub fn flag(self) -> &'static str {
        match self {
            OptLevel::O0 => "-O0",
            OptLevel::O3 => "-O3",
        }
    }
}

impl fmt::Display for OptLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptLevel::O0 => "O0",
            OptLevel::O3 => "O3",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TargetLanguage {
    #[serde(rename = "c")]
    C,
    #[serde(rename = "llvm-ir")]
    LlvmIr,
}

impl TargetLanguage {
    fn input_name(self) -> &'static str {
        match self {
            TargetLanguage::C => "input.c",
            TargetLanguage::LlvmIr => "input.ll",
        }
    }
}

impl fmt::Display for TargetLanguage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetLanguage::C => "c",
            TargetLanguage::LlvmIr => "llvm-ir",
        })
    }
}

/// Compiler command templates. Each template is split on whitespace and the
/// `{input}`, `{output}` and `{opt}` placeholders are substituted per
/// argument; no shell is involved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolchainConfig {
    pub c_compiler: String,
    pub ir_compiler: String,
    /// Appended to the compile template to emit assembly instead of linking.
    pub asm_flags: Vec<String>,
    pub compile_timeout_secs: f64,
    pub exec_timeout_secs: f64,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            c_compiler: "cc {opt} -w -o {output} {input}".into(),
            ir_compiler: "clang {opt} -w -o {output} {input}".into(),
            asm_flags: vec!["-S".into(), "-masm=intel".into()],
            compile_timeout_secs: 120.0,
            exec_timeout_secs: 5.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ToolchainError {
    /// The compiler rejected the input. A taxonomy outcome, not a fault.
    #[error("compilation failed: {diagnostic}")]
    Compile { diagnostic: String },
    #[error("toolchain infrastructure error: {0}")]
    Infrastructure(String),
}

impl From<std::io::Error> for ToolchainError {
    fn from(e: std::io::Error) -> Self {
        ToolchainError::Infrastructure(e.to_string())
    }
}

/// A linked executable plus the assembly of the same translation unit.
/// The backing temp directory lives as long as any clone of the artifact.
#[derive(Debug, Clone)]
pub struct BinaryArtifact {
    pub program_id: String,
    pub opt_level: OptLevel,
    pub binary_path: PathBuf,
    pub assembly_text: String,
    _dir: Arc<TempDir>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExecutionResult {
    Checksum { value: u32 },
    RuntimeError { detail: String },
    Timeout,
}

fn checksum_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"checksum\s*=\s*([0-9A-Fa-f]+)").expect("valid regex"))
}

/// Parses the unique `checksum = <hex>` line of a program's stdout.
pub fn parse_checksum(stdout: &str) -> Result<u32, String> {
    let mut found = None;
    for line in stdout.lines() {
        if let Some(cap) = checksum_re().captures(line) {
            if found.is_some() {
                return Err("multiple checksum lines".into());
            }
            let hex = &cap[1];
            let value = u32::from_str_radix(hex, 16).map_err(|_| format!("checksum out of range: {hex}"))?;
            found = Some(value);
        }
    }
    found.ok_or_else(|| "no checksum line".into())
}

pub fn format_checksum(value: u32) -> String {
    format!("checksum = {value:X}")
}

fn expand(template: &str, input: &str, output: &str, opt: OptLevel) -> Vec<String> {
    template
        .split_whitespace()
        .map(|arg| {
            arg.replace("{input}", input)
                .replace("{output}", output)
                .replace("{opt}", opt.flag())
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct Toolchain {
    config: ToolchainConfig,
}

impl Toolchain {
    pub fn new(config: ToolchainConfig) -> Self {
        Toolchain { config }
    }

    pub fn config(&self) -> &ToolchainConfig {
        &self.config
    }

    pub fn exec_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.config.exec_timeout_secs)
    }

    fn template(&self, lang: TargetLanguage) -> &str {
        match lang {
            TargetLanguage::C => &self.config.c_compiler,
            TargetLanguage::LlvmIr => &self.config.ir_compiler,
        }
    }

    fn invoke(&self, dir: &Path, argv: &[String]) -> Result<(), ToolchainError> {
        let timeout = Duration::from_secs_f64(self.config.compile_timeout_secs);
        let out = process::run(&Invocation::new(argv, dir, timeout)).map_err(|e| {
            ToolchainError::Infrastructure(format!("cannot run `{}`: {e}", argv.first().map(String::as_str).unwrap_or("")))
        })?;
        match out.termination {
            Termination::Exited(0) => Ok(()),
            Termination::TimedOut => Err(ToolchainError::Compile {
                diagnostic: "compiler timed out".into(),
            }),
            _ => Err(ToolchainError::Compile {
                diagnostic: out.stderr_text(),
            }),
        }
    }

    fn assemble_in(&self, dir: &Path, opt: OptLevel, lang: TargetLanguage) -> Result<String, ToolchainError> {
        let mut argv = expand(self.template(lang), lang.input_name(), "output.s", opt);
        argv.extend(self.config.asm_flags.iter().cloned());
        self.invoke(dir, &argv)?;
        Ok(fs::read_to_string(dir.join("output.s"))?)
    }

    /// Compiles `source` to assembly, then assembles and links that same
    /// text with the compile template, so the scored assembly is exactly the
    /// code that runs.
    pub fn compile(
        &self,
        program_id: &str,
        source: &str,
        opt: OptLevel,
        lang: TargetLanguage,
    ) -> Result<BinaryArtifact, ToolchainError> {
        let dir = tempfile::Builder::new().prefix("liftcheck-cc").tempdir()?;
        fs::write(dir.path().join(lang.input_name()), source)?;
        let assembly_text = self.assemble_in(dir.path(), opt, lang)?;
        let argv = expand(self.template(lang), "output.s", "program", opt);
        self.invoke(dir.path(), &argv)?;
        let binary_path = dir.path().join("program");
        if !binary_path.is_file() {
            return Err(ToolchainError::Compile {
                diagnostic: "compiler reported success but produced no binary".into(),
            });
        }
        Ok(BinaryArtifact {
            program_id: program_id.to_string(),
            opt_level: opt,
            binary_path,
            assembly_text,
            _dir: Arc::new(dir),
        })
    }

    /// Assembly for `source` only, without linking.
    pub fn emit_assembly(&self, source: &str, opt: OptLevel, lang: TargetLanguage) -> Result<String, ToolchainError> {
        let dir = tempfile::Builder::new().prefix("liftcheck-asm").tempdir()?;
        fs::write(dir.path().join(lang.input_name()), source)?;
        self.assemble_in(dir.path(), opt, lang)
    }

    /// Runs the artifact in a private directory with closed stdin and a
    /// minimal environment. Never fails: every outcome maps to one
    /// [`ExecutionResult`] variant.
    pub fn execute(&self, artifact: &BinaryArtifact, timeout: Duration) -> ExecutionResult {
        let dir = match tempfile::Builder::new().prefix("liftcheck-run").tempdir() {
            Ok(d) => d,
            Err(e) => {
                return ExecutionResult::RuntimeError {
                    detail: format!("sandbox setup failed: {e}"),
                }
            }
        };
        let argv = vec![artifact.binary_path.to_string_lossy().into_owned()];
        let inv = Invocation::new(&argv, dir.path(), timeout).env(Environment::Minimal);
        let out = match process::run(&inv) {
            Ok(o) => o,
            Err(e) => {
                return ExecutionResult::RuntimeError {
                    detail: format!("spawn failed: {e}"),
                }
            }
        };
        match out.termination {
            Termination::TimedOut => ExecutionResult::Timeout,
            Termination::Signaled(sig) => ExecutionResult::RuntimeError {
                detail: format!("killed by signal {sig}"),
            },
            Termination::Exited(0) => match parse_checksum(&out.stdout_text()) {
                Ok(value) => ExecutionResult::Checksum { value },
                Err(why) => ExecutionResult::RuntimeError {
                    detail: format!("malformed output: {why}"),
                },
            },
            Termination::Exited(code) => ExecutionResult::RuntimeError {
                detail: format!("exit status {code}"),
            },
        }
    }

    /// First line of `<compiler> --version` for each configured compiler.
    pub fn versions(&self) -> Vec<(String, String)> {
        [TargetLanguage::C, TargetLanguage::LlvmIr]
            .into_iter()
            .filter_map(|lang| {
                let exe = self.template(lang).split_whitespace().next()?.to_string();
                let argv = vec![exe.clone(), "--version".to_string()];
                let dir = std::env::temp_dir();
                let version = process::run(&Invocation::new(&argv, &dir, Duration::from_secs(10)))
                    .ok()
                    .and_then(|o| o.stdout_text().lines().next().map(str::to_string))
                    .unwrap_or_else(|| "unavailable".into());
                Some((exe, version))
            })
            .collect()
    }
}

impl Default for Toolchain {
    fn default() -> Self {
        Toolchain::new(ToolchainConfig::default())
    }
}
