//! Append-only session log: NDJSON records plus a content-addressed blob
//! directory (`events.ndjson`, `blobs/<sha256>`).

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::record::EventRecord;
use crate::raster::content_hash;

pub const EVENTS_FILE: &str = "events.ndjson";
pub const BLOB_DIR: &str = "blobs";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LogError {
    #[error("corrupt log at seq {seq}: {reason}")]
    CorruptLog { seq: u64, reason: String },
    #[error("log io: {0}")]
    Io(String),
}

impl From<std::io::Error> for LogError {
    fn from(e: std::io::Error) -> Self {
        LogError::Io(e.to_string())
    }
}

pub trait BlobSource {
    fn blob(&self, hash: &str) -> Option<&[u8]>;
}

impl BlobSource for BTreeMap<String, Vec<u8>> {
    fn blob(&self, hash: &str) -> Option<&[u8]> {
        self.get(hash).map(Vec::as_slice)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    records: Vec<EventRecord>,
    blobs: BTreeMap<String, Vec<u8>>,
}

impl BlobSource for EventLog {
    fn blob(&self, hash: &str) -> Option<&[u8]> {
        self.blobs.blob(hash)
    }
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> &[EventRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn blobs(&self) -> &BTreeMap<String, Vec<u8>> {
        &self.blobs
    }

    pub fn next_seq(&self) -> u64 {
        self.records.len() as u64
    }

    /// Stores bytes and returns their hash. Returns whether they were new.
    pub fn put_blob(&mut self, bytes: Vec<u8>) -> (String, bool) {
        let hash = content_hash(&bytes);
        let new = !self.blobs.contains_key(&hash);
        if new {
            self.blobs.insert(hash.clone(), bytes);
        }
        (hash, new)
    }

    /// Like [`EventLog::put_blob`] for bytes whose hash is already known.
    pub fn put_blob_hashed(&mut self, hash: &str, bytes: &[u8]) -> bool {
        debug_assert_eq!(hash, content_hash(bytes));
        if self.blobs.contains_key(hash) {
            return false;
        }
        self.blobs.insert(hash.to_string(), bytes.to_vec());
        true
    }

    pub fn push(&mut self, record: EventRecord) {
        assert_eq!(record.seq, self.next_seq(), "log seq must be dense");
        self.records.push(record);
    }

    /// The first `n` records with every blob they reference.
    pub fn truncated(&self, n: usize) -> EventLog {
        let records = self.records[..n.min(self.records.len())].to_vec();
        let blobs = records
            .iter()
            .flat_map(|r| r.event.blob_refs())
            .filter_map(|h| self.blobs.get(h).map(|b| (h.to_string(), b.clone())))
            .collect();
        EventLog { records, blobs }
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses NDJSON records. An unterminated final line that does not
    /// parse is a torn write and is dropped; any other undecodable line or
    /// a seq gap is `CorruptLog`.
    pub fn from_ndjson(text: &str, blobs: BTreeMap<String, Vec<u8>>) -> Result<Self, LogError> {
        let mut records: Vec<EventRecord> = Vec::new();
        let torn_tail = !text.is_empty() && !text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            let expected = records.len() as u64;
            if line.trim().is_empty() {
                return Err(LogError::CorruptLog {
                    seq: expected,
                    reason: "blank line".into(),
                });
            }
            let rec: EventRecord = match serde_json::from_str(line) {
                Ok(r) => r,
                Err(_) if torn_tail && i + 1 == lines.len() => break,
                Err(e) => {
                    return Err(LogError::CorruptLog {
                        seq: expected,
                        reason: format!("undecodable record: {e}"),
                    })
                }
            };
            if rec.seq != expected {
                return Err(LogError::CorruptLog {
                    seq: expected,
                    reason: format!("seq gap: expected {expected}, found {}", rec.seq),
                });
            }
            records.push(rec);
        }
        Ok(EventLog { records, blobs })
    }

    pub fn read_dir(dir: impl AsRef<Path>) -> Result<Self, LogError> {
        let dir = dir.as_ref();
        let text = fs::read_to_string(dir.join(EVENTS_FILE))?;
        let mut blobs = BTreeMap::new();
        let blob_dir = dir.join(BLOB_DIR);
        if blob_dir.is_dir() {
            for entry in fs::read_dir(blob_dir)? {
                let entry = entry?;
                let name = entry.file_name().to_string_lossy().into_owned();
                blobs.insert(name, fs::read(entry.path())?);
            }
        }
        Self::from_ndjson(&text, blobs)
    }

    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<(), LogError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        for (hash, bytes) in &self.blobs {
            fs::write(dir.join(BLOB_DIR).join(hash), bytes)?;
        }
        fs::write(dir.join(EVENTS_FILE), self.to_ndjson())?;
        Ok(())
    }
}

/// Write-ahead file sink. Blobs are written before the record that
/// references them; each record line is flushed before it is applied.
#[derive(Debug)]
pub struct FileSink {
    dir: PathBuf,
    events: BufWriter<File>,
}

impl FileSink {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self, LogError> {
        let dir = dir.into();
        fs::create_dir_all(dir.join(BLOB_DIR))?;
        let file = OpenOptions::new()
            .create(true)
            .truncate(true)
            .write(true)
            .open(dir.join(EVENTS_FILE))?;
        Ok(Self {
            dir,
            events: BufWriter::new(file),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_blob(&mut self, hash: &str, bytes: &[u8]) -> Result<(), LogError> {
        let path = self.dir.join(BLOB_DIR).join(hash);
        if !path.exists() {
            fs::write(path, bytes)?;
        }
        Ok(())
    }

    pub fn append(&mut self, record: &EventRecord) -> Result<(), LogError> {
        let line = serde_json::to_string(record).expect("record serializes");
        self.events.write_all(line.as_bytes())?;
        self.events.write_all(b"\n")?;
        self.events.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::record::SessionEvent;

    fn rec(seq: u64, event: SessionEvent) -> EventRecord {
        EventRecord { seq, t_ms: seq, event }
    }

    fn sample() -> EventLog {
        let mut log = EventLog::new();
        log.push(rec(0, SessionEvent::Undo));
        log.push(rec(1, SessionEvent::Redo));
        log.push(rec(2, SessionEvent::Reset));
        log
    }

    #[test]
    fn ndjson_round_trip() {
        let log = sample();
        let back = EventLog::from_ndjson(&log.to_ndjson(), BTreeMap::new()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn seq_gap_is_reported() {
        let text = sample().to_ndjson().replace(r#""seq":1,"#, r#""seq":5,"#);
        assert_eq!(
            EventLog::from_ndjson(&text, BTreeMap::new()),
            Err(LogError::CorruptLog {
                seq: 1,
                reason: "seq gap: expected 1, found 5".into()
            })
        );
    }

    #[test]
    fn torn_tail_dropped_but_middle_garbage_rejected() {
        let text = sample().to_ndjson();
        let torn = &text[..text.len() - 5];
        assert_eq!(EventLog::from_ndjson(torn, BTreeMap::new()).unwrap().len(), 2);
        let garbage = text.replacen(r#"{"seq":1"#, r#"{"seq":1,,"#, 1);
        assert!(matches!(
            EventLog::from_ndjson(&garbage, BTreeMap::new()),
            Err(LogError::CorruptLog { seq: 1, .. })
        ));
    }

    #[test]
    fn dir_round_trip_with_blobs() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = sample();
        let (hash, new) = log.put_blob(vec![1, 2, 3]);
        assert!(new);
        assert!(!log.put_blob(vec![1, 2, 3]).1);
        log.write_dir(dir.path()).unwrap();
        let back = EventLog::read_dir(dir.path()).unwrap();
        assert_eq!(back.blob(&hash), Some(&[1u8, 2, 3][..]));
        assert_eq!(back.records(), log.records());
    }

    #[test]
    fn file_sink_writes_lines_immediately() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = FileSink::create(dir.path()).unwrap();
        sink.append(&rec(0, SessionEvent::Undo)).unwrap();
        let back = EventLog::read_dir(dir.path()).unwrap();
        assert_eq!(back.len(), 1);
    }
}
