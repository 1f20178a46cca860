//! Campaign scheduling: determinism across worker counts, resume and requeue.

use std::fs;
use std::io::Write;
use std::path::Path;

use liftcheck::config::RunConfig;
use liftcheck::generator::GenerationConfig;
use liftcheck::lifters::{LifterKind, LifterSpec};
use liftcheck::pipeline::{self, CampaignError, Outcome, Terminal, SUMMARY_FILE};

const RECORDS: &str = "records.jsonl";

fn config(programs: usize) -> RunConfig {
    RunConfig {
        generator: GenerationConfig {
            program_count: programs,
            ..GenerationConfig::default()
        },
        lifters: vec![
            LifterSpec::builtin("oracle", LifterKind::BuiltinOracle),
            LifterSpec::builtin("broken_syntax", LifterKind::BuiltinBrokenSyntax),
        ],
        ..RunConfig::default()
    }
}

fn summary_bytes(dir: &Path) -> Vec<u8> {
    fs::read(dir.join(SUMMARY_FILE)).unwrap()
}

#[test]
fn worker_count_resume_and_requeue_leave_the_summary_unchanged() {
    let cfg = config(4);
    let serial = tempfile::tempdir().unwrap();
    let first = pipeline::run_campaign(&cfg, serial.path(), 1).unwrap();
    assert_eq!((first.records.len(), first.evaluated), (16, 16));
    assert_eq!(first.infrastructure_errors(), 0);
    let reference = summary_bytes(serial.path());

    for r in &first.records {
        r.check_invariants().unwrap();
        let t = &r.timings;
        match r.terminal() {
            Terminal::CompileError => {
                assert_eq!(r.lifter, "broken_syntax");
                assert!(t.lift_ms.is_some() && t.compile_ms.is_some() && t.execute_ms.is_none());
            }
            Terminal::ChecksumMatch => {
                assert_eq!(r.lifter, "oracle");
                assert!(t.lift_ms.is_some() && t.compile_ms.is_some() && t.execute_ms.is_some());
                assert_eq!(r.reference_checksum, r.lifted_checksum);
            }
            other => panic!("{}: unexpected {other}", r.program_id),
        }
    }

    let parallel = tempfile::tempdir().unwrap();
    pipeline::run_campaign(&cfg, parallel.path(), 3).unwrap();
    assert_eq!(summary_bytes(parallel.path()), reference);

    // Keep half of the log plus a torn line, then resume.
    let log = serial.path().join(RECORDS);
    let text = fs::read_to_string(&log).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let mut kept = lines[..8].join("\n");
    kept.push('\n');
    kept.push_str(&lines[8][..lines[8].len() / 2]);
    fs::write(&log, kept).unwrap();
    fs::remove_file(serial.path().join(SUMMARY_FILE)).unwrap();
    let resumed = pipeline::run_campaign(&cfg, serial.path(), 2).unwrap();
    assert_eq!(resumed.evaluated, 8);
    assert_eq!(summary_bytes(serial.path()), reference);

    // An infrastructure record for a finished cell is evaluated again.
    let mut infra = resumed.records[0].clone();
    infra.outcome = Outcome::new(Terminal::Infrastructure, "disk full");
    infra.similarity = None;
    infra.lifted_checksum = None;
    infra.timings = Default::default();
    let mut f = fs::OpenOptions::new().append(true).open(&log).unwrap();
    writeln!(f, "{}", serde_json::to_string(&infra).unwrap()).unwrap();
    drop(f);
    let requeued = pipeline::run_campaign(&cfg, serial.path(), 1).unwrap();
    assert_eq!(requeued.evaluated, 1);
    assert_eq!(summary_bytes(serial.path()), reference);

    // Nothing left to do.
    assert_eq!(pipeline::run_campaign(&cfg, serial.path(), 1).unwrap().evaluated, 0);

    // A different program set cannot reuse the directory.
    match pipeline::run_campaign(&config(5), serial.path(), 1) {
        Err(CampaignError::ProgramsMismatch(msg)) => assert!(msg.contains("program_count"), "{msg}"),
        other => panic!("expected a programs mismatch, got {:?}", other.map(|o| o.evaluated)),
    }
}

#[test]
fn corrupt_record_line_is_reported_with_its_location() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(RECORDS), "{\"not\": \"a record\"}\n").unwrap();
    let err = pipeline::load_records(dir.path()).unwrap_err().to_string();
    assert!(err.contains("records.jsonl:1"), "{err}");
}
