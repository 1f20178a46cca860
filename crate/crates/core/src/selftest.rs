//! Expected outcomes of the built-in reference lifters.

use crate::config::RunConfig;
use crate::generator::Backend;
use crate::lifters::LifterKind;
use crate::pipeline::{EvaluationRecord, Terminal};
use crate::report::Summary;

/// Everything wrong with a completed campaign that used the built-in
/// lifters. Empty means the harness behaves as specified: every column is
/// a partition, the oracle scores 1.0, broken syntax always fails to
/// compile, the non-terminating lifter always times out, and the sabotage
/// lifter produces at least one checksum mismatch.
pub fn violations(config: &RunConfig, summary: &Summary, records: &[EvaluationRecord]) -> Vec<String> {
    let mut problems = Vec::new();
    if let Err(e) = summary.check_partition() {
        problems.push(e);
    }
    problems.extend(records.iter().filter_map(|r| r.check_invariants().err()));
    if summary.infrastructure_errors > 0 {
        problems.push(format!("{} infrastructure errors", summary.infrastructure_errors));
    }
    let expected = config.generator.program_count as u64;
    for spec in &config.lifters {
        for &opt in &config.pipeline.opt_levels {
            let Some(row) = summary.row(&spec.name, opt) else {
                problems.push(format!("{} {opt}: no records", spec.name));
                continue;
            };
            let cell = format!("{} {opt}", spec.name);
            if row.tested != expected {
                problems.push(format!("{cell}: tested {} of {expected}", row.tested));
            }
            match spec.kind {
                LifterKind::BuiltinOracle if row.checksum_correct != row.tested => {
                    problems.push(format!("{cell}: {} of {} correct", row.checksum_correct, row.tested))
                }
                LifterKind::BuiltinBrokenSyntax if row.compilation_error != row.tested => {
                    problems.push(format!("{cell}: {} of {} compile errors", row.compilation_error, row.tested))
                }
                LifterKind::BuiltinNonterminating if row.timeout != row.tested => {
                    problems.push(format!("{cell}: {} of {} timeouts", row.timeout, row.tested))
                }
                LifterKind::BuiltinSabotage if row.checksum_error == 0 => {
                    problems.push(format!("{cell}: no checksum mismatch"))
                }
                _ => {}
            }
        }
    }
    // Built-in programs always end with a scalar feed outside any loop, so
    // every sabotaged one must mismatch.
    if config.generator.backend != Backend::Builtin {
        return problems;
    }
    let sabotaged_matches = records
        .iter()
        .filter(|r| r.terminal() == Terminal::ChecksumMatch)
        .filter(|r| {
            config
                .lifters
                .iter()
                .any(|l| l.name == r.lifter && l.kind == LifterKind::BuiltinSabotage)
        })
        .count();
    if sabotaged_matches > 0 {
        problems.push(format!("sabotage: {sabotaged_matches} perturbed programs still matched"));
    }
    problems
}
