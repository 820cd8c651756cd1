//! Append-only NDJSON store for recorded envelopes.
//!
//! One JSON object per line; payloads are base64. Appends are buffered in
//! memory and written out at each [`RecordStore::flush`] and on close.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use bytes::Bytes;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::bus::{MessageEnvelope, Topic, TopicPattern};
use crate::kernel::VirtualTime;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordEntry {
    pub store_sequence: u64,
    pub topic: Topic,
    pub publish_time: VirtualTime,
    pub ingest_time: VirtualTime,
    pub schema_tag: String,
    #[serde(serialize_with = "ser_b64", deserialize_with = "de_b64")]
    pub payload: Bytes,
}

impl RecordEntry {
    /// Entry for `envelope` as received at `ingest_time`; the store assigns
    /// the sequence on append.
    pub fn from_envelope(envelope: &MessageEnvelope, ingest_time: VirtualTime) -> Self {
        RecordEntry {
            store_sequence: 0,
            topic: envelope.topic.clone(),
            publish_time: envelope.publish_time,
            ingest_time,
            schema_tag: envelope.schema_tag.clone(),
            payload: envelope.payload.clone(),
        }
    }
}

fn ser_b64<S: Serializer>(b: &Bytes, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&B64.encode(b))
}

fn de_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Bytes, D::Error> {
    let s = String::deserialize(d)?;
    B64.decode(s.as_bytes())
        .map(Bytes::from)
        .map_err(serde::de::Error::custom)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(pub u64);

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SessionStats {
    pub session_id: u64,
    pub entries_written: u64,
    pub bytes_written: u64,
    #[serde(serialize_with = "ser_secs")]
    pub wall_clock_write_time: Duration,
    pub dropped: u64,
}

fn ser_secs<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store is closed")]
    Closed,
    #[error("store is read-only")]
    ReadOnly,
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt record at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error("unknown session {0}")]
    UnknownSession(u64),
    #[error("from ({from}) is after to ({to})")]
    BadRange { from: VirtualTime, to: VirtualTime },
}

impl StoreError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, StoreError::Io(_))
    }
}

#[derive(Debug)]
pub struct RecordStore {
    path: Option<PathBuf>,
    writer: Option<BufWriter<File>>,
    entries: Vec<RecordEntry>,
    flushed: usize,
    next_sequence: u64,
    sessions: BTreeMap<SessionId, SessionStats>,
    current: Option<SessionId>,
    closed: bool,
    read_only: bool,
    injected_failures: u32,
}

impl RecordStore {
    /// Creates (or truncates) a store file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)?;
        let mut store = RecordStore::in_memory();
        store.writer = Some(BufWriter::with_capacity(1 << 20, file));
        store.path = Some(path);
        Ok(store)
    }

    /// A store with no backing file, for tests and dry runs.
    pub fn in_memory() -> Self {
        RecordStore {
            path: None,
            writer: None,
            entries: vec![],
            flushed: 0,
            next_sequence: 1,
            sessions: BTreeMap::new(),
            current: None,
            closed: false,
            read_only: false,
            injected_failures: 0,
        }
    }

    /// Loads a store file for querying.
    pub fn open_read(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let reader = BufReader::new(File::open(path)?);
        let mut entries = vec![];
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: RecordEntry = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(entry);
        }
        let next_sequence = entries.last().map_or(1, |e| e.store_sequence + 1);
        let mut store = RecordStore::in_memory();
        store.path = Some(path.to_path_buf());
        store.flushed = entries.len();
        store.entries = entries;
        store.next_sequence = next_sequence;
        store.read_only = true;
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[RecordEntry] {
        &self.entries
    }

    pub fn begin_session(&mut self) -> SessionId {
        let id = SessionId(self.sessions.len() as u64 + 1);
        self.sessions.insert(
            id,
            SessionStats {
                session_id: id.0,
                ..Default::default()
            },
        );
        self.current = Some(id);
        id
    }

    /// The next `n` appends fail with an I/O error.
    pub fn inject_failures(&mut self, n: u32) {
        self.injected_failures += n;
    }

    fn session_mut(&mut self) -> &mut SessionStats {
        let id = match self.current {
            Some(id) => id,
            None => self.begin_session(),
        };
        self.sessions.get_mut(&id).expect("current session exists")
    }

    pub fn append(&mut self, mut entry: RecordEntry) -> Result<u64, StoreError> {
        if self.closed {
            return Err(StoreError::Closed);
        }
        if self.read_only {
            return Err(StoreError::ReadOnly);
        }
        if self.injected_failures > 0 {
            self.injected_failures -= 1;
            return Err(StoreError::Io(io::Error::other("injected write failure")));
        }
        let started = Instant::now();
        entry.store_sequence = self.next_sequence;
        self.next_sequence += 1;
        let bytes = entry.payload.len() as u64;
        self.entries.push(entry);
        let elapsed = started.elapsed();
        let session = self.session_mut();
        session.entries_written += 1;
        session.bytes_written += bytes;
        session.wall_clock_write_time += elapsed;
        Ok(self.next_sequence - 1)
    }

    /// Counts an entry that could not be written.
    pub fn record_drop(&mut self) {
        self.session_mut().dropped += 1;
    }

    /// Writes buffered entries to the file.
    pub fn flush(&mut self) -> Result<(), StoreError> {
        if self.flushed == self.entries.len() {
            return Ok(());
        }
        let started = Instant::now();
        if let Some(w) = self.writer.as_mut() {
            for entry in &self.entries[self.flushed..] {
                serde_json::to_writer(&mut *w, entry).map_err(io::Error::from)?;
                w.write_all(b"\n")?;
            }
            w.flush()?;
        }
        self.flushed = self.entries.len();
        let elapsed = started.elapsed();
        self.session_mut().wall_clock_write_time += elapsed;
        Ok(())
    }

    pub fn close(&mut self) -> Result<(), StoreError> {
        if self.closed {
            return Ok(());
        }
        self.flush()?;
        self.closed = true;
        self.writer = None;
        Ok(())
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Entries matching `pattern` with `publish_time` in `[from, to]`, ordered
    /// by `(publish_time, store_sequence)`.
    pub fn query(
        &self,
        pattern: &TopicPattern,
        from: VirtualTime,
        to: VirtualTime,
    ) -> Result<Vec<&RecordEntry>, StoreError> {
        if from > to {
            return Err(StoreError::BadRange { from, to });
        }
        let mut out: Vec<&RecordEntry> = self
            .entries
            .iter()
            .filter(|e| e.publish_time >= from && e.publish_time <= to && pattern.matches(&e.topic))
            .collect();
        out.sort_by_key(|e| (e.publish_time, e.store_sequence));
        Ok(out)
    }

    pub fn stats(&self, session: SessionId) -> Result<SessionStats, StoreError> {
        self.sessions
            .get(&session)
            .cloned()
            .ok_or(StoreError::UnknownSession(session.0))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionStats> {
        self.sessions.values()
    }

    /// Sum of wall-clock write time across sessions.
    pub fn total_write_time(&self) -> Duration {
        self.sessions.values().map(|s| s.wall_clock_write_time).sum()
    }
}

impl Drop for RecordStore {
    fn drop(&mut self) {
        if !self.closed && !self.read_only {
            let _ = self.flush();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(topic: &str, t_ms: u64, payload: &[u8]) -> RecordEntry {
        RecordEntry {
            store_sequence: 0,
            topic: Topic::new(topic).unwrap(),
            publish_time: VirtualTime::from_millis(t_ms),
            ingest_time: VirtualTime::from_millis(t_ms),
            schema_tag: "pose".into(),
            payload: Bytes::copy_from_slice(payload),
        }
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ndjson");
        let mut store = RecordStore::create(&path).unwrap();
        let payload: Vec<u8> = (0..=255).collect();
        store.append(entry("/cloud/vehicle/0/pose", 10, &payload)).unwrap();
        store.close().unwrap();
        let back = RecordStore::open_read(&path).unwrap();
        assert_eq!(back.entries()[0].payload.as_ref(), payload.as_slice());
        assert_eq!(back.entries()[0].store_sequence, 1);
    }

    #[test]
    fn append_after_close_fails() {
        let mut store = RecordStore::in_memory();
        store.close().unwrap();
        assert!(matches!(store.append(entry("/a", 0, b"x")), Err(StoreError::Closed)));
    }

    #[test]
    fn query_filters_and_orders() {
        let mut store = RecordStore::in_memory();
        store.append(entry("/cloud/vehicle/1/pose", 20, b"b")).unwrap();
        store.append(entry("/cloud/vehicle/0/pose", 10, b"a")).unwrap();
        store.append(entry("/cloud/vehicle/0/points", 15, b"c")).unwrap();
        let pat = TopicPattern::new("/cloud/vehicle/+/pose").unwrap();
        let got = store
            .query(&pat, VirtualTime::ZERO, VirtualTime::from_secs(1))
            .unwrap();
        assert_eq!(got.iter().map(|e| e.payload.as_ref()).collect::<Vec<_>>(), vec![b"a", b"b"]);
        let all = TopicPattern::new("#").unwrap();
        assert_eq!(store.query(&all, VirtualTime::ZERO, VirtualTime::MAX).unwrap().len(), 3);
        assert!(store
            .query(&all, VirtualTime::from_secs(5), VirtualTime::from_secs(6))
            .unwrap()
            .is_empty());
        assert!(matches!(
            store.query(&all, VirtualTime::from_secs(6), VirtualTime::from_secs(5)),
            Err(StoreError::BadRange { .. })
        ));
    }

    #[test]
    fn session_stats() {
        let mut store = RecordStore::in_memory();
        let s = store.begin_session();
        assert_eq!(store.stats(s).unwrap().entries_written, 0);
        assert_eq!(store.stats(s).unwrap().dropped, 0);
        assert!(matches!(store.stats(SessionId(9)), Err(StoreError::UnknownSession(9))));
        store.inject_failures(1);
        let err = store.append(entry("/a", 0, b"x")).unwrap_err();
        assert!(err.is_retryable());
        store.append(entry("/a", 0, b"x")).unwrap();
        assert_eq!(store.stats(s).unwrap().entries_written, 1);
    }
}
