//! Append-only JSONL event log.

use std::fs::{File, OpenOptions};
use std::hash::Hasher;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const LOG_VERSION: u32 = 1;

/// One line of the event log. `agent` is empty for run-wide records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub v: u32,
    pub seq: u64,
    pub day: u32,
    pub tick: u32,
    pub agent: String,
    #[serde(rename = "type")]
    pub kind: String,
    pub payload: Value,
}

impl LogRecord {
    pub fn line(&self) -> String {
        serde_json::to_string(self).expect("log records serialize")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot read log: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

/// In-memory record list mirrored to an optional file.
#[derive(Debug, Default)]
pub struct EventLog {
    records: Vec<LogRecord>,
    file: Option<BufWriter<File>>,
    next_seq: u64,
}

impl EventLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Truncates `path` and writes every record there.
    pub fn create(path: &Path) -> io::Result<Self> {
        let f = File::create(path)?;
        Ok(Self { records: Vec::new(), file: Some(BufWriter::new(f)), next_seq: 0 })
    }

    /// Continues an existing log file; `next_seq` is the first sequence
    /// number not yet written.
    pub fn append_to(path: &Path, next_seq: u64) -> io::Result<Self> {
        let f = OpenOptions::new().append(true).open(path)?;
        Ok(Self { records: Vec::new(), file: Some(BufWriter::new(f)), next_seq })
    }

    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn push(&mut self, day: u32, tick: u32, agent: &str, kind: &str, payload: Value) -> io::Result<&LogRecord> {
        let rec = LogRecord { v: LOG_VERSION, seq: self.next_seq, day, tick, agent: agent.to_owned(), kind: kind.to_owned(), payload };
        self.next_seq += 1;
        if let Some(f) = &mut self.file {
            writeln!(f, "{}", rec.line())?;
        }
        self.records.push(rec);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Hands buffered lines to the OS without waiting for the disk.
    pub fn flush(&mut self) -> io::Result<()> {
        match &mut self.file {
            Some(f) => f.flush(),
            None => Ok(()),
        }
    }

    /// Flushes buffered lines and syncs the file to disk.
    pub fn sync(&mut self) -> io::Result<()> {
        if let Some(f) = &mut self.file {
            f.flush()?;
            f.get_ref().sync_all()?;
        }
        Ok(())
    }

    /// Records written by this handle (a resumed log starts empty).
    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn since(&self, seq: u64) -> &[LogRecord] {
        let i = self.records.partition_point(|r| r.seq < seq);
        &self.records[i..]
    }
}

/// Parses JSONL; a bad line is reported with its 1-based number.
pub fn parse_log(reader: impl BufRead) -> Result<Vec<LogRecord>, LogError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line).map_err(|e| LogError::Corrupt { line: i + 1, message: e.to_string() })?;
        if rec.v != LOG_VERSION {
            return Err(LogError::Corrupt { line: i + 1, message: format!("unsupported version {}", rec.v) });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, LogError> {
    parse_log(BufReader::new(File::open(path)?))
}

/// FNV-1a of the bytes, as 16 hex digits.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = FnvHasher::default();
    h.write(bytes);
    format!("{:016x}", h.finish())
}

pub fn records_hash(records: &[LogRecord]) -> String {
    let mut buf = String::new();
    for r in records {
        buf.push_str(&r.line());
        buf.push('\n');
    }
    content_hash(buf.as_bytes())
}
