//! Persistence: an append-only JSON-lines log plus periodic snapshots.
//!
//! [`EventStore`] is the seam for other backends; [`FileStore`] is the
//! default and [`MemoryStore`] keeps everything in memory.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use thiserror::Error;

use crate::records::LogRecord;
use crate::state::PlatformState;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: line {line} is corrupt: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("snapshot {path}: {message}")]
    Snapshot { path: PathBuf, message: String },
}

/// What recovery found: the latest snapshot (if any) and the records after it.
#[derive(Debug, Default)]
pub struct Recovered {
    pub snapshot: Option<PlatformState>,
    pub tail: Vec<LogRecord>,
    /// Bytes of a torn final line that were cut off.
    pub truncated_bytes: u64,
}

impl Recovered {
    pub fn into_state(self) -> PlatformState {
        let mut state = self.snapshot.unwrap_or_default();
        state.reindex();
        for rec in &self.tail {
            state.apply(rec);
        }
        state
    }
}

pub trait EventStore: Send + Sync {
    fn recover(&mut self) -> Result<Recovered, StoreError>;
    /// Durably appends one record.
    fn append(&mut self, record: &LogRecord) -> Result<(), StoreError>;
    fn write_snapshot(&mut self, state: &PlatformState) -> Result<(), StoreError>;
}

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    log: Option<File>,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(Self { dir, log: None })
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
        move |source| StoreError::Io {
            path: path.to_owned(),
            source,
        }
    }
}

impl EventStore for FileStore {
    fn recover(&mut self) -> Result<Recovered, StoreError> {
        let snap_path = self.snapshot_path();
        let snapshot = match fs::read_to_string(&snap_path) {
            Ok(text) => Some(
                serde_json::from_str::<PlatformState>(&text).map_err(|e| StoreError::Snapshot {
                    path: snap_path.clone(),
                    message: e.to_string(),
                })?,
            ),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Self::io(&snap_path)(e)),
        };
        let after = snapshot.as_ref().map_or(0, |s| s.last_event_id);

        let log_path = self.log_path();
        let mut tail = Vec::new();
        let mut truncated_bytes = 0;
        if log_path.exists() {
            let file = File::open(&log_path).map_err(Self::io(&log_path))?;
            let total = file.metadata().map_err(Self::io(&log_path))?.len();
            let mut reader = BufReader::new(file);
            let mut offset = 0u64;
            let mut last_id = 0u64;
            let mut line_no = 0;
            let mut buf = String::new();
            loop {
                buf.clear();
                let n = reader.read_line(&mut buf).map_err(Self::io(&log_path))? as u64;
                if n == 0 {
                    break;
                }
                line_no += 1;
                let complete = buf.ends_with('\n');
                match serde_json::from_str::<LogRecord>(buf.trim_end()) {
                    Ok(rec) if complete => {
                        if rec.event_id <= last_id {
                            return Err(StoreError::Corrupt {
                                path: log_path,
                                line: line_no,
                                message: format!("event id {} does not follow {last_id}", rec.event_id),
                            });
                        }
                        last_id = rec.event_id;
                        if rec.event_id > after {
                            tail.push(rec);
                        }
                    }
                    // A torn write can only be the final line.
                    _ if offset + n == total => {
                        tracing::warn!(line = line_no, bytes = n, "cutting torn final log line");
                        let f = OpenOptions::new().write(true).open(&log_path).map_err(Self::io(&log_path))?;
                        f.set_len(offset).map_err(Self::io(&log_path))?;
                        f.sync_all().map_err(Self::io(&log_path))?;
                        truncated_bytes = n;
                        break;
                    }
                    Ok(_) => unreachable!("only the final line can lack a newline"),
                    Err(e) => {
                        return Err(StoreError::Corrupt {
                            path: log_path,
                            line: line_no,
                            message: e.to_string(),
                        })
                    }
                }
                offset += n;
            }
        }
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(Self::io(&log_path))?;
        self.log = Some(log);
        Ok(Recovered {
            snapshot,
            tail,
            truncated_bytes,
        })
    }

    fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        let path = self.log_path();
        if self.log.is_none() {
            let log = OpenOptions::new().create(true).append(true).open(&path).map_err(Self::io(&path))?;
            self.log = Some(log);
        }
        let file = self.log.as_mut().expect("opened above");
        let mut line = serde_json::to_string(record).expect("records always serialize");
        line.push('\n');
        file.write_all(line.as_bytes()).map_err(Self::io(&path))?;
        file.sync_data().map_err(Self::io(&path))
    }

    fn write_snapshot(&mut self, state: &PlatformState) -> Result<(), StoreError> {
        let path = self.snapshot_path();
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let body = serde_json::to_vec(state).expect("state always serializes");
        let mut f = File::create(&tmp).map_err(Self::io(&tmp))?;
        f.write_all(&body).map_err(Self::io(&tmp))?;
        f.sync_all().map_err(Self::io(&tmp))?;
        fs::rename(&tmp, &path).map_err(Self::io(&path))
    }
}

/// Shared in-memory store; clones see the same data, so a "restart" can
/// hand a clone to a fresh platform.
#[derive(Debug, Clone, Default)]
pub struct MemoryStore {
    inner: Arc<Mutex<(Vec<String>, Option<String>)>>,
}

impl EventStore for MemoryStore {
    fn recover(&mut self) -> Result<Recovered, StoreError> {
        let inner = self.inner.lock().expect("memory store lock");
        let snapshot: Option<PlatformState> = inner
            .1
            .as_ref()
            .map(|s| serde_json::from_str(s).expect("own snapshot parses"));
        let after = snapshot.as_ref().map_or(0, |s| s.last_event_id);
        let tail = inner
            .0
            .iter()
            .map(|l| serde_json::from_str::<LogRecord>(l).expect("own record parses"))
            .filter(|r| r.event_id > after)
            .collect();
        Ok(Recovered {
            snapshot,
            tail,
            truncated_bytes: 0,
        })
    }

    fn append(&mut self, record: &LogRecord) -> Result<(), StoreError> {
        let line = serde_json::to_string(record).expect("records always serialize");
        self.inner.lock().expect("memory store lock").0.push(line);
        Ok(())
    }

    fn write_snapshot(&mut self, state: &PlatformState) -> Result<(), StoreError> {
        let body = serde_json::to_string(state).expect("state always serializes");
        self.inner.lock().expect("memory store lock").1 = Some(body);
        Ok(())
    }
}
