//! External-command and HTTP lifter adapters, the latter against a scripted
//! mock endpoint that replays canned LLVM-IR.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::os::unix::fs::PermissionsExt;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;

use liftcheck::config::RunConfig;
use liftcheck::generator::{builtin, GenerationConfig};
use liftcheck::lifters::{self, builtin as reference, HttpLlmConfig, LiftRequest, LiftResult, LifterKind, LifterSpec};
use liftcheck::metrics::{Metric, SimilarityScores};
use liftcheck::pipeline::{self, establish_ground_truth, CampaignError, Terminal};
use liftcheck::toolchain::{OptLevel, TargetLanguage, Toolchain, ToolchainConfig};
use serde_json::{json, Value};

type Handler = dyn Fn(&Value) -> (u16, String) + Send + Sync;

fn handle(mut stream: TcpStream, handler: &Handler) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut length = 0usize;
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let l = line.trim_end();
        if l.is_empty() {
            break;
        }
        if let Some((k, v)) = l.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                length = v.trim().parse().unwrap();
            }
        }
    }
    let mut body = vec![0u8; length];
    reader.read_exact(&mut body).unwrap();
    let request: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
    let (status, payload) = handler(&request);
    let response = format!(
        "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
        payload.len()
    );
    let _ = stream.write_all(response.as_bytes());
}

/// Serves `handler` on an ephemeral port until the test process exits.
fn mock_endpoint(handler: Arc<Handler>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/complete", listener.local_addr().unwrap());
    thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let h = Arc::clone(&handler);
            thread::spawn(move || handle(stream, &*h));
        }
    });
    url
}

fn completion(text: &str) -> (u16, String) {
    (200, json!({ "completion": text }).to_string())
}

fn emit_llvm(source: &str) -> String {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("lifted.c");
    fs::write(&c, source).unwrap();
    let out = Command::new("clang")
        .args(["-S", "-emit-llvm", "-O1", "-w", "-o", "-"])
        .arg(&c)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[derive(Clone, Copy, PartialEq, Debug)]
enum Canned {
    Correct,
    Sabotaged,
    Unparseable,
}

fn canned_for(index: usize) -> Canned {
    [Canned::Correct, Canned::Sabotaged, Canned::Unparseable][index % 3]
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

#[test]
fn http_lifter_campaign_reproduces_known_aggregates() {
    let gen = GenerationConfig {
        program_count: 6,
        ..GenerationConfig::default()
    };
    let toolchain = Toolchain::new(ToolchainConfig::default());
    let programs: Vec<_> = (0..gen.program_count as u64)
        .map(|seed| builtin::generate(gen.seed_start + seed).source)
        .collect();

    // Canned replies keyed by the exact assembly the harness will send.
    let mut replies: HashMap<String, (usize, String)> = HashMap::new();
    let mut expected_scores: HashMap<(OptLevel, usize), SimilarityScores> = HashMap::new();
    for (i, src) in programs.iter().enumerate() {
        let reply = match canned_for(i) {
            Canned::Correct => emit_llvm(src),
            Canned::Sabotaged => emit_llvm(&reference::sabotage(src).unwrap()),
            Canned::Unparseable => "define i32 @main( {\n  this is not IR\n".to_string(),
        };
        for opt in OptLevel::ALL {
            let asm = toolchain
                .compile("probe", src, opt, TargetLanguage::C)
                .unwrap()
                .assembly_text;
            if canned_for(i) != Canned::Unparseable {
                let round_trip = toolchain.emit_assembly(&reply, opt, TargetLanguage::LlvmIr).unwrap();
                expected_scores.insert(
                    (opt, i),
                    SimilarityScores::compute(&asm, &round_trip, &Default::default()),
                );
            }
            replies.insert(asm, (i, reply.clone()));
        }
    }
    let replies = Arc::new(replies);
    let url = mock_endpoint(Arc::new(move |req: &Value| {
        let prompt = req["prompt"].as_str().unwrap_or("");
        if prompt == "ping" {
            return completion("pong");
        }
        match replies.iter().find(|(asm, _)| prompt.contains(asm.as_str())) {
            Some((_, (_, ir))) => completion(ir),
            None => (400, json!({"error": "unknown prompt"}).to_string()),
        }
    }));

    let config = RunConfig {
        generator: gen,
        lifters: vec![LifterSpec {
            name: "llm".into(),
            kind: LifterKind::HttpLlm(HttpLlmConfig::new(url)),
            request_timeout_secs: 30.0,
            max_concurrency: Some(2),
        }],
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let outcome = pipeline::run_campaign(&config, dir.path(), 2).unwrap();
    assert_eq!(outcome.records.len(), 12);
    for r in &outcome.records {
        r.check_invariants().unwrap();
        let i: usize = r.program_id.trim_start_matches("prog_").parse().unwrap();
        let want = match canned_for(i) {
            Canned::Correct => Terminal::ChecksumMatch,
            Canned::Sabotaged => Terminal::ChecksumMismatch,
            Canned::Unparseable => Terminal::CompileError,
        };
        assert_eq!(r.terminal(), want, "{}: {}", r.program_id, r.outcome.detail);
        if let Some(s) = r.similarity {
            assert_eq!(s, expected_scores[&(r.opt_level, i)]);
        }
    }

    for opt in OptLevel::ALL {
        let row = outcome.summary.row("llm", opt).unwrap();
        assert_eq!(
            (row.tested, row.compilation_error, row.checksum_error, row.checksum_correct),
            (6, 2, 2, 2)
        );
        assert_eq!(row.semantic_score, Some(2.0 / 6.0));
        for metric in Metric::ALL {
            let cell = outcome
                .summary
                .correlation
                .iter()
                .find(|c| c.opt_level == opt && c.metric == metric)
                .unwrap();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..6 {
                if let Some(s) = expected_scores.get(&(opt, i)) {
                    xs.push(s.get(metric));
                    ys.push(if canned_for(i) == Canned::Correct { 1.0 } else { 0.0 });
                }
            }
            assert_eq!((cell.n_pass, cell.n_fail), (2, 2));
            let pass: Vec<f64> = xs.iter().zip(&ys).filter(|(_, y)| **y == 1.0).map(|(x, _)| *x).collect();
            assert!((cell.pass_mean.unwrap() - pass.iter().sum::<f64>() / 2.0).abs() < 1e-12);
            match cell.r {
                Some(r) => assert!((r - pearson(&xs, &ys)).abs() < 1e-12),
                // Equal scores across the four records leave r undefined.
                None => assert!(xs.iter().all(|x| *x == xs[0])),
            }
        }
    }
    assert!(dir.path().join("run_meta.json").is_file());
    assert!(dir.path().join("boxplot.json").is_file());
}

#[test]
fn unreachable_endpoint_aborts_before_generation() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let config = RunConfig {
        generator: GenerationConfig {
            program_count: 2,
            ..GenerationConfig::default()
        },
        lifters: vec![LifterSpec::builtin(
            "llm",
            LifterKind::HttpLlm(HttpLlmConfig::new(format!("http://127.0.0.1:{port}/v1"))),
        )],
        ..RunConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    match pipeline::run_campaign(&config, dir.path(), 1) {
        Err(CampaignError::LifterUnavailable { lifter, .. }) => assert_eq!(lifter, "llm"),
        other => panic!("expected an unavailable lifter, got {other:?}"),
    }
    assert!(!dir.path().join("programs").exists());
}

fn request() -> LiftRequest {
    let src = builtin::generate(3).source;
    let binary = Toolchain::new(ToolchainConfig::default())
        .compile("prog_3", &src, OptLevel::O0, TargetLanguage::C)
        .unwrap();
    LiftRequest {
        program_id: "prog_3".into(),
        original_assembly: binary.assembly_text.clone(),
        binary,
        original_source: Some(src),
    }
}

#[test]
fn transient_http_failures_are_retried() {
    let calls = Arc::new(AtomicUsize::new(0));
    let seen = Arc::clone(&calls);
    let url = mock_endpoint(Arc::new(move |_req: &Value| {
        if seen.fetch_add(1, Ordering::SeqCst) < 2 {
            (503, "{}".into())
        } else {
            completion("int main(void) { return 0; }")
        }
    }));
    let spec = LifterSpec::builtin("llm", LifterKind::HttpLlm(HttpLlmConfig::new(url)));
    match lifters::lift(&spec, &request()) {
        LiftResult::Lifted { language, .. } => assert_eq!(language, TargetLanguage::LlvmIr),
        other => panic!("{other:?}"),
    }
    assert_eq!(calls.load(Ordering::SeqCst), 3);
}

#[test]
fn client_errors_and_bad_bodies_are_lift_errors() {
    let url = mock_endpoint(Arc::new(|req: &Value| {
        if req["max_tokens"] == 8192 && req["prompt"].as_str().unwrap().contains("<code>") {
            (200, "{\"unexpected\": true}".into())
        } else {
            (400, "{}".into())
        }
    }));
    let spec = LifterSpec::builtin("llm", LifterKind::HttpLlm(HttpLlmConfig::new(url.clone())));
    assert!(matches!(lifters::lift(&spec, &request()), LiftResult::LiftError { .. }));
    let templated = HttpLlmConfig {
        prompt_template: "{assembly}".into(),
        ..HttpLlmConfig::new(url)
    };
    let spec = LifterSpec::builtin("llm", LifterKind::HttpLlm(templated));
    match lifters::lift(&spec, &request()) {
        LiftResult::LiftError { detail } => assert!(detail.contains("400"), "{detail}"),
        other => panic!("{other:?}"),
    }
}

fn external(command: &str, timeout: f64) -> LifterSpec {
    LifterSpec {
        name: "ext".into(),
        kind: LifterKind::ExternalCommand {
            command: command.into(),
            output_language: TargetLanguage::C,
        },
        request_timeout_secs: timeout,
        max_concurrency: None,
    }
}

#[test]
fn external_command_failure_is_a_lift_error() {
    match lifters::lift(&external("false {binary}", 10.0), &request()) {
        LiftResult::LiftError { detail } => assert!(detail.contains("Exited(1)"), "{detail}"),
        other => panic!("{other:?}"),
    }
    match lifters::lift(&external("sleep 5", 0.3), &request()) {
        LiftResult::LiftError { detail } => assert!(detail.contains("timed out"), "{detail}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(
        lifters::lift(&external("true", 10.0), &request()),
        LiftResult::LiftError { .. }
    ));
}

#[test]
fn external_command_output_file_and_stdout() {
    let req = request();
    let dir = tempfile::tempdir().unwrap();
    let original = dir.path().join("original.c");
    fs::write(&original, req.original_source.as_deref().unwrap()).unwrap();
    let script = dir.path().join("fake-lifter");
    fs::write(&script, format!("#!/bin/sh\ntest -x \"$1\" || exit 3\ncp '{}' \"$2\"\n", original.display())).unwrap();
    fs::set_permissions(&script, fs::Permissions::from_mode(0o755)).unwrap();

    let spec = external(&format!("{} {{binary}} {{out}}", script.display()), 10.0);
    assert_eq!(lifters::health_check(&spec), lifters::Health::Ok);
    match lifters::lift(&spec, &req) {
        LiftResult::Lifted { source, .. } => assert_eq!(Some(source), req.original_source),
        other => panic!("{other:?}"),
    }

    match lifters::lift(&external("cat {asm_in}", 10.0), &req) {
        LiftResult::Lifted { source, .. } => assert_eq!(source, req.original_assembly),
        other => panic!("{other:?}"),
    }

    // The file-backed lifter feeds a full evaluation.
    let toolchain = Toolchain::new(ToolchainConfig::default());
    let program = liftcheck::generator::TestProgram {
        id: "prog_3".into(),
        seed: 3,
        token_count: 0,
        source: req.original_source.clone().unwrap(),
        origin: liftcheck::generator::Origin::Builtin,
    };
    let truth = establish_ground_truth(&toolchain, &program, OptLevel::O3).unwrap();
    let ctx = pipeline::EvalContext {
        toolchain: &toolchain,
        weights: &Default::default(),
    };
    let record = pipeline::evaluate_one(&ctx, &program, &spec, &truth);
    assert_eq!(record.terminal(), Terminal::ChecksumMatch, "{}", record.outcome.detail);
    assert!(record.timings.lift_ms.is_some() && record.timings.compile_ms.is_some() && record.timings.execute_ms.is_some());
}

#[test]
fn missing_external_executable_is_unavailable() {
    let spec = external("/nonexistent/lifter {binary}", 10.0);
    assert!(matches!(lifters::health_check(&spec), lifters::Health::Unavailable(_)));
}
