//! Driver for an external Csmith executable.

use std::path::Path;
use std::time::Duration;

use super::GenerateError;
use crate::toolchain::process::{self, Invocation, Termination};

/// Disables Csmith features whose behaviour is implementation-defined or that
/// commonly trip lifters for reasons unrelated to semantics.
pub const DEFAULT_FLAGS: &[&str] = &[
    "--no-packed-struct",
    "--no-bitfields",
    "--no-volatiles",
    "--no-argc",
];

const CSMITH_TIMEOUT: Duration = Duration::from_secs(60);

/// Confirms the executable runs and answers `--version`.
pub fn probe(path: &Path) -> Result<String, String> {
    let argv = vec![path.to_string_lossy().into_owned(), "--version".into()];
    let dir = std::env::temp_dir();
    let out = process::run(&Invocation::new(&argv, &dir, Duration::from_secs(10)))
        .map_err(|e| format!("{}: {e}", path.display()))?;
    if !out.success() {
        return Err(format!("{} --version exited with {:?}", path.display(), out.termination));
    }
    Ok(out.stdout_text().lines().next().unwrap_or("").to_string())
}

pub fn generate(path: &Path, seed: u64, flags: &[String]) -> Result<String, GenerateError> {
    let mut argv = vec![path.to_string_lossy().into_owned(), "--seed".into(), seed.to_string()];
    argv.extend(flags.iter().cloned());
    let dir = std::env::temp_dir();
    let out = process::run(&Invocation::new(&argv, &dir, CSMITH_TIMEOUT))
        .map_err(|e| GenerateError::BackendUnavailable(format!("{}: {e}", path.display())))?;
    match out.termination {
        Termination::Exited(0) => Ok(out.stdout_text()),
        other => Err(GenerateError::BackendUnavailable(format!(
            "csmith seed {seed} terminated with {other:?}: {}",
            out.stderr_text().trim()
        ))),
    }
}
