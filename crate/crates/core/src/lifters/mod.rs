//! Adapters over the lifters under evaluation.
//!
//! A lifter turns a binary (plus its assembly) back into compilable source.
//! Tool misbehaviour never escapes as an error: every failure becomes
//! [`LiftResult::LiftError`].

pub mod builtin;
pub mod external;
pub mod http;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::toolchain::{BinaryArtifact, TargetLanguage};

pub use http::HttpLlmConfig;

/// Input for one lift. `original_source` is a harness side channel that only
/// the built-in reference lifters read.
#[derive(Debug, Clone)]
pub struct LiftRequest {
    pub program_id: String,
    pub binary: BinaryArtifact,
    pub original_assembly: String,
    pub original_source: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiftResult {
    Lifted { source: String, language: TargetLanguage },
    LiftError { detail: String },
}

impl LiftResult {
    pub(crate) fn lifted(source: String, language: TargetLanguage) -> Self {
        if source.trim().is_empty() {
            LiftResult::LiftError {
                detail: "lifter produced empty output".into(),
            }
        } else {
            LiftResult::Lifted { source, language }
        }
    }

    pub(crate) fn error(detail: impl Into<String>) -> Self {
        LiftResult::LiftError { detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LifterKind {
    /// Runs a command template with `{binary}`, `{asm_in}` and `{out}`
    /// placeholders. Output is read from `{out}` when the template mentions
    /// it, otherwise from stdout.
    ExternalCommand {
        command: String,
        output_language: TargetLanguage,
    },
    HttpLlm(HttpLlmConfig),
    /// Returns the original source.
    BuiltinOracle,
    /// Returns the original source with the last checksum feed perturbed.
    BuiltinSabotage,
    /// Returns text that cannot compile.
    BuiltinBrokenSyntax,
    /// Returns a program that never terminates.
    BuiltinNonterminating,
}

fn default_request_timeout() -> f64 {
    300.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: LifterKind,
    #[serde(default = "default_request_timeout")]
    pub request_timeout_secs: f64,
    /// Upper bound on concurrent lifts for this lifter; unbounded if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_concurrency: Option<usize>,
}

impl LifterSpec {
    pub fn builtin(name: &str, kind: LifterKind) -> Self {
        LifterSpec {
            name: name.to_string(),
            kind,
            request_timeout_secs: default_request_timeout(),
            max_concurrency: None,
        }
    }

    /// The four reference lifters used by the self-test.
    pub fn builtin_set() -> Vec<LifterSpec> {
        vec![
            LifterSpec::builtin("oracle", LifterKind::BuiltinOracle),
            LifterSpec::builtin("sabotage", LifterKind::BuiltinSabotage),
            LifterSpec::builtin("broken_syntax", LifterKind::BuiltinBrokenSyntax),
            LifterSpec::builtin("nonterminating", LifterKind::BuiltinNonterminating),
        ]
    }

    pub fn output_language(&self) -> TargetLanguage {
        match &self.kind {
            LifterKind::ExternalCommand { output_language, .. } => *output_language,
            LifterKind::HttpLlm(cfg) => cfg.output_language,
            _ => TargetLanguage::C,
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("lifters[].name: must not be empty".into());
        }
        if self.request_timeout_secs.is_nan() || self.request_timeout_secs <= 0.0 {
            return Err(format!("lifters[{}].request_timeout_secs: must be positive", self.name));
        }
        if self.max_concurrency == Some(0) {
            return Err(format!("lifters[{}].max_concurrency: must be positive", self.name));
        }
        match &self.kind {
            LifterKind::ExternalCommand { command, .. } if command.split_whitespace().next().is_none() => {
                Err(format!("lifters[{}].command: must not be empty", self.name))
            }
            LifterKind::HttpLlm(cfg) => cfg.validate().map_err(|e| format!("lifters[{}].{e}", self.name)),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Health {
    Ok,
    Unavailable(String),
}

/// Runs one lift. Never panics or errors on tool misbehaviour.
pub fn lift(spec: &LifterSpec, request: &LiftRequest) -> LiftResult {
    match &spec.kind {
        LifterKind::ExternalCommand { command, output_language } => {
            external::lift(command, *output_language, spec.request_timeout(), request)
        }
        LifterKind::HttpLlm(cfg) => http::lift(cfg, spec.request_timeout(), request),
        LifterKind::BuiltinOracle => match &request.original_source {
            Some(src) => LiftResult::lifted(src.clone(), TargetLanguage::C),
            None => LiftResult::error("oracle lifter requires the original source"),
        },
        LifterKind::BuiltinSabotage => match &request.original_source {
            Some(src) => LiftResult::lifted(builtin::sabotage(src).unwrap_or_else(|| src.clone()), TargetLanguage::C),
            None => LiftResult::error("sabotage lifter requires the original source"),
        },
        LifterKind::BuiltinBrokenSyntax => {
            LiftResult::lifted(builtin::broken_syntax(request.original_source.as_deref()), TargetLanguage::C)
        }
        LifterKind::BuiltinNonterminating => LiftResult::lifted(builtin::NONTERMINATING.to_string(), TargetLanguage::C),
    }
}

pub fn health_check(spec: &LifterSpec) -> Health {
    match &spec.kind {
        LifterKind::ExternalCommand { command, .. } => external::health_check(command),
        LifterKind::HttpLlm(cfg) => http::health_check(cfg, spec.request_timeout()),
        _ => Health::Ok,
    }
}
