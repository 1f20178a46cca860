//! Append-only JSON-lines persistence for evaluation records.
//!
//! One record per line, flushed as soon as it is written. On load the last
//! line for a key wins, and a trailing line cut short by a crash is
//! discarded and truncated away before appending resumes.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{CellKey, EvaluationRecord};

pub const RECORDS_FILE: &str = "records.jsonl";

/// Records from an existing log, keyed by cell.
pub fn load(path: &Path) -> io::Result<BTreeMap<CellKey, EvaluationRecord>> {
    let mut records = BTreeMap::new();
    let text = match fs::read(path) {
        Ok(bytes) => bytes,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(records),
        Err(e) => return Err(e),
    };
    let complete = match text.iter().rposition(|&b| b == b'\n') {
        Some(i) => &text[..=i],
        None => &text[..0],
    };
    let complete = std::str::from_utf8(complete).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
    for (n, line) in complete.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: EvaluationRecord = serde_json::from_str(line).map_err(|e| {
            io::Error::new(
                io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), n + 1),
            )
        })?;
        records.insert(record.key(), record);
    }
    Ok(records)
}

/// Serialised appender shared by all workers.
pub struct RecordLog {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordLog {
    /// Opens `path` for appending, first cutting any partial trailing line.
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).read(true).append(true).open(path)?;
        let bytes = fs::read(path)?;
        let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if keep != bytes.len() {
            file.set_len(keep as u64)?;
        }
        Ok(RecordLog {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &EvaluationRecord) -> io::Result<()> {
        let mut line = serde_json::to_string(record).map_err(io::Error::other)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|p| p.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()
    }
}
