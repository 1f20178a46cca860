//! Per-cell evaluation: lift, recompile, execute, compare.
//!
//! A cell is one (program, lifter, optimisation level) triple. Every cell
//! ends in exactly one [`Terminal`] state; harness faults are kept apart as
//! [`Terminal::Infrastructure`] so taxonomy counts stay exact.

pub mod campaign;
pub mod store;

use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::generator::TestProgram;
use crate::lifters::{self, LiftRequest, LiftResult, LifterSpec};
use crate::metrics::{CodeBleuWeights, SimilarityScores};
use crate::toolchain::{BinaryArtifact, ExecutionResult, OptLevel, TargetLanguage, Toolchain, ToolchainError};

pub use campaign::{
    check_lifters, load_or_generate, load_records, run_campaign, CampaignError, RunMeta, RunOutcome, BOXPLOT_FILE,
    META_FILE, PROGRAMS_DIR, SUMMARY_FILE,
};

/// Longest detail string kept in a record.
pub const DETAIL_LIMIT: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    LiftError,
    CompileError,
    RuntimeError,
    Timeout,
    ChecksumMismatch,
    ChecksumMatch,
    /// Harness fault; excluded from the taxonomy and retried on resume.
    Infrastructure,
}

impl Terminal {
    pub const TAXONOMY: [Terminal; 6] = [
        Terminal::LiftError,
        Terminal::CompileError,
        Terminal::RuntimeError,
        Terminal::Timeout,
        Terminal::ChecksumMismatch,
        Terminal::ChecksumMatch,
    ];

    /// The lifted source compiled, so round-trip assembly exists.
    pub fn compiled(self) -> bool {
        matches!(
            self,
            Terminal::RuntimeError | Terminal::Timeout | Terminal::ChecksumMismatch | Terminal::ChecksumMatch
        )
    }

    pub fn executed_to_checksum(self) -> bool {
        matches!(self, Terminal::ChecksumMismatch | Terminal::ChecksumMatch)
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Terminal::LiftError => "lift_error",
            Terminal::CompileError => "compile_error",
            Terminal::RuntimeError => "runtime_error",
            Terminal::Timeout => "timeout",
            Terminal::ChecksumMismatch => "checksum_mismatch",
            Terminal::ChecksumMatch => "checksum_match",
            Terminal::Infrastructure => "infrastructure",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub terminal: Terminal,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl Outcome {
    pub fn new(terminal: Terminal, detail: impl Into<String>) -> Self {
        Outcome {
            terminal,
            detail: truncate(detail.into(), DETAIL_LIMIT),
        }
    }
}

fn truncate(mut s: String, limit: usize) -> String {
    if s.len() > limit {
        let mut cut = limit;
        while !s.is_char_boundary(cut) {
            cut -= 1;
        }
        s.truncate(cut);
        s.push_str(" [truncated]");
    }
    s
}

/// Wall-clock milliseconds per stage; a stage that did not run is absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Timings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lift_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execute_ms: Option<u64>,
}

fn millis(d: Duration) -> u64 {
    d.as_millis().min(u64::MAX as u128) as u64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub program_id: String,
    pub lifter: String,
    pub opt_level: OptLevel,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_checksum: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifted_checksum: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityScores>,
    #[serde(default)]
    pub timings: Timings,
}

impl EvaluationRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            program_id: self.program_id.clone(),
            lifter: self.lifter.clone(),
            opt_level: self.opt_level,
        }
    }

    pub fn terminal(&self) -> Terminal {
        self.outcome.terminal
    }

    /// Checks the structural invariants tying outcome, checksums and
    /// similarity together.
    pub fn check_invariants(&self) -> Result<(), String> {
        let t = self.terminal();
        if t != Terminal::Infrastructure && self.similarity.is_some() != t.compiled() {
            return Err(format!("{}: similarity presence disagrees with {t}", self.describe()));
        }
        if self.lifted_checksum.is_some() != t.executed_to_checksum() {
            return Err(format!("{}: lifted checksum presence disagrees with {t}", self.describe()));
        }
        if t.executed_to_checksum() {
            let matched = self.lifted_checksum == self.reference_checksum;
            if matched != (t == Terminal::ChecksumMatch) {
                return Err(format!("{}: checksum comparison disagrees with {t}", self.describe()));
            }
        }
        Ok(())
    }

    fn describe(&self) -> String {
        format!("{}/{}/{}", self.program_id, self.lifter, self.opt_level)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub program_id: String,
    pub lifter: String,
    pub opt_level: OptLevel,
}

/// Stage A output for one (program, opt level): the reference binary, its
/// assembly and its checksum.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub artifact: BinaryArtifact,
    pub checksum: u32,
}

/// Compiles and runs the original program.
pub fn establish_ground_truth(
    toolchain: &Toolchain,
    program: &TestProgram,
    opt: OptLevel,
) -> Result<GroundTruth, String> {
    let artifact = toolchain
        .compile(&program.id, &program.source, opt, TargetLanguage::C)
        .map_err(|e| format!("ground truth at {opt}: {e}"))?;
    match toolchain.execute(&artifact, toolchain.exec_timeout()) {
        ExecutionResult::Checksum { value } => Ok(GroundTruth { artifact, checksum: value }),
        ExecutionResult::RuntimeError { detail } => Err(format!("ground truth at {opt}: {detail}")),
        ExecutionResult::Timeout => Err(format!("ground truth at {opt}: timed out")),
    }
}

/// Everything [`evaluate_one`] needs besides the cell itself.
pub struct EvalContext<'a> {
    pub toolchain: &'a Toolchain,
    pub weights: &'a CodeBleuWeights,
}

/// Runs lift, compile, execute and compare for one cell. Never fails; the
/// first failing stage decides the outcome.
pub fn evaluate_one(
    ctx: &EvalContext<'_>,
    program: &TestProgram,
    lifter: &LifterSpec,
    truth: &GroundTruth,
) -> EvaluationRecord {
    let opt = truth.artifact.opt_level;
    let mut record = EvaluationRecord {
        program_id: program.id.clone(),
        lifter: lifter.name.clone(),
        opt_level: opt,
        outcome: Outcome::new(Terminal::Infrastructure, ""),
        reference_checksum: Some(truth.checksum),
        lifted_checksum: None,
        similarity: None,
        timings: Timings::default(),
    };

    let request = LiftRequest {
        program_id: program.id.clone(),
        binary: truth.artifact.clone(),
        original_assembly: truth.artifact.assembly_text.clone(),
        original_source: Some(program.source.clone()),
    };
    let started = Instant::now();
    let lifted = lifters::lift(lifter, &request);
    record.timings.lift_ms = Some(millis(started.elapsed()));
    let (source, language) = match lifted {
        LiftResult::Lifted { source, language } => (source, language),
        LiftResult::LiftError { detail } => {
            record.outcome = Outcome::new(Terminal::LiftError, detail);
            return record;
        }
    };

    let started = Instant::now();
    let compiled = ctx.toolchain.compile(&program.id, &source, opt, language);
    record.timings.compile_ms = Some(millis(started.elapsed()));
    let artifact = match compiled {
        Ok(a) => a,
        Err(ToolchainError::Compile { diagnostic }) => {
            record.outcome = Outcome::new(Terminal::CompileError, diagnostic);
            return record;
        }
        Err(e @ ToolchainError::Infrastructure(_)) => {
            record.outcome = Outcome::new(Terminal::Infrastructure, e.to_string());
            return record;
        }
    };
    record.similarity = Some(SimilarityScores::compute(
        &truth.artifact.assembly_text,
        &artifact.assembly_text,
        ctx.weights,
    ));

    let started = Instant::now();
    let executed = ctx.toolchain.execute(&artifact, ctx.toolchain.exec_timeout());
    record.timings.execute_ms = Some(millis(started.elapsed()));
    record.outcome = match executed {
        ExecutionResult::Timeout => Outcome::new(
            Terminal::Timeout,
            format!("no exit within {:?}", ctx.toolchain.exec_timeout()),
        ),
        ExecutionResult::RuntimeError { detail } => Outcome::new(Terminal::RuntimeError, detail),
        ExecutionResult::Checksum { value } => {
            record.lifted_checksum = Some(value);
            if value == truth.checksum {
                Outcome::new(Terminal::ChecksumMatch, "")
            } else {
                Outcome::new(
                    Terminal::ChecksumMismatch,
                    format!("expected {:X}, got {value:X}", truth.checksum),
                )
            }
        }
    };
    record
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncation_respects_char_boundaries() {
        let s = "é".repeat(10);
        let t = truncate(s, 5);
        assert!(t.starts_with("éé"));
        assert!(t.ends_with("[truncated]"));
        assert_eq!(truncate("short".into(), 10), "short");
    }

    #[test]
    fn record_round_trips_through_json() {
        let record = EvaluationRecord {
            program_id: "prog_1".into(),
            lifter: "oracle".into(),
            opt_level: OptLevel::O3,
            outcome: Outcome::new(Terminal::ChecksumMatch, ""),
            reference_checksum: Some(0xDEADBEEF),
            lifted_checksum: Some(0xDEADBEEF),
            similarity: Some(SimilarityScores {
                bleu1: 1.0,
                bleu4: 1.0,
                codebleu: 1.0,
            }),
            timings: Timings {
                lift_ms: Some(0),
                compile_ms: Some(40),
                execute_ms: Some(2),
            },
        };
        let line = serde_json::to_string(&record).unwrap();
        assert!(line.contains(r#""terminal":"checksum_match""#));
        assert!(line.contains(r#""opt_level":"O3""#));
        let back: EvaluationRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, record);
        assert!(back.check_invariants().is_ok());
    }

    #[test]
    fn invariant_violations_are_reported() {
        let mut record = EvaluationRecord {
            program_id: "prog_1".into(),
            lifter: "x".into(),
            opt_level: OptLevel::O0,
            outcome: Outcome::new(Terminal::ChecksumMatch, ""),
            reference_checksum: Some(1),
            lifted_checksum: Some(2),
            similarity: None,
            timings: Timings::default(),
        };
        assert!(record.check_invariants().is_err());
        record.outcome = Outcome::new(Terminal::CompileError, "x");
        record.lifted_checksum = None;
        assert!(record.check_invariants().is_ok());
    }
}
