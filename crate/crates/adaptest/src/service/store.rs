//! Append-only session logs.
//!
//! Layout under the data directory:
//!
//! ```text
//! index.jsonl            one {session_id, bank_id, created_ms} per line
//! sessions/<id>.jsonl    the session transcript, one event per line
//! ```
//!
//! Every append is flushed with `sync_data` before the caller answers the
//! request. A session file is complete on disk before its index line is.

use std::fs::{self, File, OpenOptions};
use std::io::{Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use adaptest_core::engine::SessionEvent;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::event_line;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub session_id: String,
    pub bank_id: String,
    pub created_ms: u64,
}

/// A session's log as read back from disk.
#[derive(Debug)]
pub struct StoredSession {
    pub entry: IndexEntry,
    pub events: Vec<SessionEvent>,
    pub updated_ms: u64,
    pub log: SessionLog,
}

#[derive(Debug)]
pub struct SessionLog {
    file: File,
    path: PathBuf,
}

impl SessionLog {
    pub fn append(&mut self, events: &[SessionEvent]) -> Result<()> {
        let bytes: String = events.iter().map(event_line).collect();
        self.file
            .write_all(bytes.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|e| Error::io(&self.path, e))
    }
}

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    index: File,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn sync_dir(path: &Path) -> Result<()> {
    File::open(path)
        .and_then(|d| d.sync_all())
        .map_err(|e| Error::io(path, e))
}

impl Store {
    pub fn open(root: &Path) -> Result<Self> {
        let sessions = root.join("sessions");
        fs::create_dir_all(&sessions).map_err(|e| Error::io(&sessions, e))?;
        let index_path = root.join("index.jsonl");
        let index = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&index_path)
            .map_err(|e| Error::io(&index_path, e))?;
        sync_dir(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            index,
        })
    }

    fn session_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.jsonl"))
    }

    /// Writes a new session's first events, then registers it in the index.
    pub fn create(&mut self, entry: &IndexEntry, events: &[SessionEvent]) -> Result<SessionLog> {
        let path = self.session_path(&entry.session_id);
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut log = SessionLog { file, path };
        log.append(events)?;
        sync_dir(&self.root.join("sessions"))?;
        let mut line = serde_json::to_string(entry).expect("index entries serialize");
        line.push('\n');
        let index_path = self.root.join("index.jsonl");
        self.index
            .write_all(line.as_bytes())
            .and_then(|_| self.index.sync_data())
            .map_err(|e| Error::io(&index_path, e))?;
        Ok(log)
    }

    /// Reads every indexed session. A torn final line, left by a crash in
    /// the middle of an append, is cut off.
    pub fn load_all(&self) -> Result<Vec<StoredSession>> {
        let index_path = self.root.join("index.jsonl");
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let Ok(entry) = serde_json::from_str::<IndexEntry>(line) else {
                tracing::warn!(line, "skipping unreadable index line");
                continue;
            };
            let path = self.session_path(&entry.session_id);
            match read_log(&path) {
                Ok((events, log, updated_ms)) => out.push(StoredSession {
                    entry,
                    events,
                    updated_ms,
                    log,
                }),
                Err(e) => tracing::error!(session = entry.session_id, error = %e, "cannot read session log"),
            }
        }
        Ok(out)
    }
}

fn read_log(path: &Path) -> Result<(Vec<SessionEvent>, SessionLog, u64)> {
    let mut file = OpenOptions::new()
        .read(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut events = Vec::new();
    let mut valid_len = 0usize;
    for chunk in text.split_inclusive('\n') {
        match serde_json::from_str::<SessionEvent>(chunk.trim_end()) {
            Ok(ev) if chunk.ends_with('\n') => {
                events.push(ev);
                valid_len += chunk.len();
            }
            _ => {
                tracing::warn!(path = %path.display(), "dropping torn tail of session log");
                break;
            }
        }
    }
    if valid_len < text.len() {
        file.set_len(valid_len as u64)
            .and_then(|_| file.seek(SeekFrom::End(0)).map(|_| ()))
            .and_then(|_| file.sync_data())
            .map_err(|e| Error::io(path, e))?;
    }
    let updated_ms = file
        .metadata()
        .and_then(|m| m.modified())
        .ok()
        .and_then(|t| t.duration_since(UNIX_EPOCH).ok())
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0);
    Ok((
        events,
        SessionLog {
            file,
            path: path.to_path_buf(),
        },
        updated_ms,
    ))
}
