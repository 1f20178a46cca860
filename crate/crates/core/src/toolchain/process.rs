//! Subprocess execution with a wall-clock bound.
//!
//! Children are placed in their own process group so that a timeout kills the
//! whole tree, not only the direct child.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

/// Captured streams are truncated beyond this many bytes.
pub const DEFAULT_OUTPUT_LIMIT: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Exited(i32),
    Signaled(i32),
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    pub termination: Termination,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub elapsed: Duration,
}

impl ProcessOutput {
    pub fn success(&self) -> bool {
        self.termination == Termination::Exited(0)
    }

    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Environment {
    Inherit,
    /// Empty environment apart from `LC_ALL=C`.
    Minimal,
}

#[derive(Debug, Clone)]
pub struct Invocation<'a> {
    pub argv: &'a [String],
    pub cwd: &'a Path,
    pub timeout: Duration,
    pub env: Environment,
    pub output_limit: usize,
}

impl<'a> Invocation<'a> {
    pub fn new(argv: &'a [String], cwd: &'a Path, timeout: Duration) -> Self {
        Invocation {
            argv,
            cwd,
            timeout,
            env: Environment::Inherit,
            output_limit: DEFAULT_OUTPUT_LIMIT,
        }
    }

    pub fn env(mut self, env: Environment) -> Self {
        self.env = env;
        self
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R, limit: usize) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match reader.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = limit.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
            }
        }
        kept
    })
}

fn kill_group(child: &Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: plain syscall; the group id equals the child pid because the
    // child was spawned with process_group(0).
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
}

pub fn run(inv: &Invocation<'_>) -> io::Result<ProcessOutput> {
    let (program, args) = inv
        .argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(inv.cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if inv.env == Environment::Minimal {
        cmd.env_clear().env("LC_ALL", "C");
    }
    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let out = drain(child.stdout.take().expect("piped stdout"), inv.output_limit);
    let err = drain(child.stderr.take().expect("piped stderr"), inv.output_limit);

    let deadline = start + inv.timeout;
    let mut poll = Duration::from_millis(1);
    let termination = loop {
        if let Some(status) = child.try_wait()? {
            break match (status.code(), status.signal()) {
                (Some(code), _) => Termination::Exited(code),
                (None, Some(sig)) => Termination::Signaled(sig),
                (None, None) => Termination::Exited(-1),
            };
        }
        if Instant::now() >= deadline {
            kill_group(&child);
            let _ = child.wait();
            break Termination::TimedOut;
        }
        thread::sleep(poll);
        poll = (poll * 2).min(Duration::from_millis(20));
    };
    // a timed-out group is already dead; stray grandchildren holding the pipe
    // were killed with it, so the readers terminate
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(ProcessOutput {
        termination,
        stdout,
        stderr,
        elapsed: start.elapsed(),
    })
}
