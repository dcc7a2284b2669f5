//! Append-only session event log with periodic manifest snapshots.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::autolabel::Abstention;
use crate::model::{Label, Sample};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoLabel {
    pub id: String,
    pub label: Label,
    pub pass: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    LabelSubmitted {
        sample_id: String,
        label: Label,
        annotator: Option<String>,
        overwrite: bool,
    },
    /// Replaces every automatic label in the session.
    PropagationApplied {
        passes: u32,
        assignments: Vec<AutoLabel>,
        abstained: Vec<(String, Abstention)>,
    },
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// Equals the state version after this event is applied.
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub version: u64,
    pub samples: Vec<Sample>,
    pub abstained: Vec<(String, Abstention)>,
    pub propagations: u64,
    pub closed: bool,
}

/// Where events go. The in-memory variant keeps everything for replay tests.
#[derive(Debug)]
pub enum EventLog {
    Memory(Vec<Event>),
    Dir { dir: PathBuf, file: File, snapshot_every: u64 },
}

impl EventLog {
    pub fn memory() -> Self {
        EventLog::Memory(Vec::new())
    }

    pub fn open_dir(dir: &Path, snapshot_every: u64) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let file = OpenOptions::new().create(true).append(true).open(events_path(dir))?;
        Ok(EventLog::Dir { dir: dir.to_path_buf(), file, snapshot_every: snapshot_every.max(1) })
    }

    /// Durably records one event.
    pub fn append(&mut self, event: &Event) -> io::Result<()> {
        match self {
            EventLog::Memory(v) => {
                v.push(event.clone());
                Ok(())
            }
            EventLog::Dir { file, .. } => {
                let mut line = serde_json::to_vec(event).expect("event serialize");
                line.push(b'\n');
                file.write_all(&line)?;
                file.sync_data()
            }
        }
    }

    pub fn wants_snapshot(&self, version: u64) -> bool {
        matches!(self, EventLog::Dir { snapshot_every, .. } if version.is_multiple_of(*snapshot_every))
    }

    pub fn write_snapshot(&self, snapshot: &Snapshot) -> io::Result<()> {
        if let EventLog::Dir { dir, .. } = self {
            let path = snapshot_path(dir);
            let tmp = crate::ingest::tmp_sibling(&path);
            fs::write(&tmp, serde_json::to_vec(snapshot).expect("snapshot serialize"))?;
            fs::rename(tmp, path)?;
        }
        Ok(())
    }

    pub fn events(&self) -> Option<&[Event]> {
        match self {
            EventLog::Memory(v) => Some(v),
            EventLog::Dir { .. } => None,
        }
    }
}

pub fn events_path(dir: &Path) -> PathBuf {
    dir.join("events.jsonl")
}

pub fn snapshot_path(dir: &Path) -> PathBuf {
    dir.join("snapshot.json")
}

pub fn read_snapshot(dir: &Path) -> io::Result<Option<Snapshot>> {
    match fs::read(snapshot_path(dir)) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e)),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e),
    }
}

/// Reads the event log; a torn last line from a crash mid-append is dropped.
pub fn read_events(dir: &Path) -> io::Result<Vec<Event>> {
    let file = match File::open(events_path(dir)) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let lines: Vec<String> = BufReader::new(file).lines().collect::<Result<_, _>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => break,
            Err(e) => {
                return Err(io::Error::new(io::ErrorKind::InvalidData, format!("event line {}: {e}", i + 1)))
            }
        }
    }
    Ok(events)
}
