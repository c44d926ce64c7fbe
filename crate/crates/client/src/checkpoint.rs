//! Append-only checkpoint store: a fingerprint header line followed by one
//! JSON line per persisted raw response. A response is durable once its
//! line hits the file, so a killed run resumes without repeating work; a
//! truncated trailing line (crash mid-write) is dropped on load.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ClientError;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub crawl_id: String,
    pub raw: String,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub fingerprint: String,
    pub entries: Vec<CheckpointEntry>,
    /// Trailing lines dropped because they did not parse (torn writes).
    pub dropped_lines: usize,
}

/// Loads an existing checkpoint; `Ok(None)` when the file does not exist.
pub fn load(path: &Path) -> Result<Option<Checkpoint>, ClientError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(io_err(path, e)),
    };
    let mut lines = BufReader::new(file).lines();
    let header_line = match lines.next() {
        Some(l) => l.map_err(|e| io_err(path, e))?,
        None => return Ok(None), // empty file: treat as absent
    };
    let header: Header = serde_json::from_str(&header_line).map_err(|e| {
        io_err(path, std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad checkpoint header: {e}")))
    })?;

    let mut entries = Vec::new();
    let mut dropped = 0usize;
    for line in lines {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<CheckpointEntry>(&line) {
            Ok(e) => entries.push(e),
            Err(_) => {
                // Torn write from a killed run; everything after it is
                // untrustworthy.
                dropped += 1;
                break;
            }
        }
    }
    Ok(Some(Checkpoint { fingerprint: header.fingerprint, entries, dropped_lines: dropped }))
}

/// Single writer appending entries; every append is flushed before it
/// returns, so acknowledged work survives a kill.
pub struct CheckpointWriter {
    file: File,
    path: PathBuf,
}

impl CheckpointWriter {
    /// Creates a fresh checkpoint with the fingerprint header.
    pub fn create(path: &Path, fingerprint: &str) -> Result<Self, ClientError> {
        let mut file = File::create(path).map_err(|e| io_err(path, e))?;
        let header = serde_json::to_string(&Header { fingerprint: fingerprint.to_string() })
            .expect("header serializes");
        file.write_all(header.as_bytes()).map_err(|e| io_err(path, e))?;
        file.write_all(b"\n").map_err(|e| io_err(path, e))?;
        file.flush().map_err(|e| io_err(path, e))?;
        Ok(CheckpointWriter { file, path: path.to_path_buf() })
    }

    /// Opens an existing checkpoint for appending. A torn final line (no
    /// trailing newline) is truncated away first so new entries never fuse
    /// with crash debris.
    pub fn open_append(path: &Path) -> Result<Self, ClientError> {
        let contents = std::fs::read(path).map_err(|e| io_err(path, e))?;
        if !contents.is_empty() && !contents.ends_with(b"\n") {
            let keep = contents.iter().rposition(|b| *b == b'\n').map(|i| i + 1).unwrap_or(0);
            let file = OpenOptions::new().write(true).open(path).map_err(|e| io_err(path, e))?;
            file.set_len(keep as u64).map_err(|e| io_err(path, e))?;
        }
        let file = OpenOptions::new().append(true).open(path).map_err(|e| io_err(path, e))?;
        Ok(CheckpointWriter { file, path: path.to_path_buf() })
    }

    pub fn append(&mut self, entry: &CheckpointEntry) -> Result<(), ClientError> {
        let mut line = serde_json::to_string(entry).expect("entry serializes");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(|e| io_err(&self.path, e))?;
        self.file.flush().map_err(|e| io_err(&self.path, e))?;
        Ok(())
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ClientError {
    ClientError::Io { path: path.to_path_buf(), source: e }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn create_append_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.jsonl");
        let mut w = CheckpointWriter::create(&path, "fp-1").unwrap();
        w.append(&CheckpointEntry { crawl_id: "a".into(), raw: "输出A\n两行".into() }).unwrap();
        w.append(&CheckpointEntry { crawl_id: "b".into(), raw: "输出B".into() }).unwrap();
        drop(w);

        let cp = load(&path).unwrap().unwrap();
        assert_eq!(cp.fingerprint, "fp-1");
        assert_eq!(cp.entries.len(), 2);
        assert_eq!(cp.entries[0].crawl_id, "a");
        assert_eq!(cp.entries[0].raw, "输出A\n两行");
        assert_eq!(cp.dropped_lines, 0);
    }

    #[test]
    fn missing_file_loads_as_none() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load(&dir.path().join("nope.jsonl")).unwrap().is_none());
    }

    #[test]
    fn truncated_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cp.jsonl");
        let mut w = CheckpointWriter::create(&path, "fp").unwrap();
        w.append(&CheckpointEntry { crawl_id: "a".into(), raw: "ok".into() }).unwrap();
        drop(w);
        // Simulate a torn write.
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"crawl_id\":\"b\",\"ra").unwrap();
        drop(f);

        let cp = load(&path).unwrap().unwrap();
        assert_eq!(cp.entries.len(), 1);
        assert_eq!(cp.dropped_lines, 1);

        // Re-opening truncates the torn tail so new entries stay intact.
        let mut w = CheckpointWriter::open_append(&path).unwrap();
        w.append(&CheckpointEntry { crawl_id: "c".into(), raw: "ok2".into() }).unwrap();
        drop(w);
        let cp = load(&path).unwrap().unwrap();
        assert_eq!(cp.entries.len(), 2);
        assert_eq!(cp.dropped_lines, 0);
        assert_eq!(cp.entries[1].crawl_id, "c");
    }
}
