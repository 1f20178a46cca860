use std::env;
use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use super::{Health, LiftRequest, LiftResult};
use crate::toolchain::process::{self, Invocation, Termination};
use crate::toolchain::TargetLanguage;

const ASM_IN: &str = "input.s";

fn output_name(lang: TargetLanguage) -> &'static str {
    match lang {
        TargetLanguage::C => "lifted.c",
        TargetLanguage::LlvmIr => "lifted.ll",
    }
}

fn is_executable(path: &Path) -> bool {
    fs::metadata(path)
        .map(|m| m.is_file() && m.permissions().mode() & 0o111 != 0)
        .unwrap_or(false)
}

/// Resolves a program name the way `execvp` would.
pub(crate) fn resolve_executable(program: &str) -> Option<PathBuf> {
    if program.contains('/') {
        let p = PathBuf::from(program);
        return is_executable(&p).then_some(p);
    }
    env::var_os("PATH").and_then(|paths| {
        env::split_paths(&paths)
            .map(|dir| dir.join(program))
            .find(|p| is_executable(p))
    })
}

pub fn health_check(command: &str) -> Health {
    match command.split_whitespace().next() {
        None => Health::Unavailable("empty command".into()),
        Some(program) => match resolve_executable(program) {
            Some(_) => Health::Ok,
            None => Health::Unavailable(format!("executable not found: {program}")),
        },
    }
}

fn tail(text: &str, max_lines: usize) -> String {
    let lines: Vec<&str> = text.trim_end().lines().collect();
    lines[lines.len().saturating_sub(max_lines)..].join("\n")
}

pub fn lift(command: &str, lang: TargetLanguage, timeout: Duration, request: &LiftRequest) -> LiftResult {
    let dir = match tempfile::Builder::new().prefix("liftcheck-lift").tempdir() {
        Ok(d) => d,
        Err(e) => return LiftResult::error(format!("cannot create work dir: {e}")),
    };
    if let Err(e) = fs::write(dir.path().join(ASM_IN), &request.original_assembly) {
        return LiftResult::error(format!("cannot stage assembly: {e}"));
    }
    let out_path = dir.path().join(output_name(lang));
    let binary = request.binary.binary_path.to_string_lossy();
    let argv: Vec<String> = command
        .split_whitespace()
        .map(|arg| {
            arg.replace("{binary}", &binary)
                .replace("{asm_in}", ASM_IN)
                .replace("{out}", &out_path.to_string_lossy())
        })
        .collect();
    let out = match process::run(&Invocation::new(&argv, dir.path(), timeout)) {
        Ok(o) => o,
        Err(e) => return LiftResult::error(format!("cannot run lifter: {e}")),
    };
    match out.termination {
        Termination::Exited(0) => {}
        Termination::TimedOut => return LiftResult::error(format!("lifter timed out after {timeout:?}")),
        other => {
            return LiftResult::error(format!("lifter terminated with {other:?}: {}", tail(&out.stderr_text(), 5)))
        }
    }
    let text = if command.contains("{out}") {
        match fs::read_to_string(&out_path) {
            Ok(t) => t,
            Err(e) => return LiftResult::error(format!("no output file: {e}")),
        }
    } else {
        out.stdout_text()
    };
    LiftResult::lifted(text, lang)
}
