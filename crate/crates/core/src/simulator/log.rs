//! Execution events and measurement records.
//!
//! Logs are saved in the line-delimited record format: a header of kind
//! `execution-log` carrying the final state and outcome, then one event per
//! line.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Snapshot;
use crate::records::{read_records, write_records};
use crate::Result;

const KIND: &str = "execution-log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub seq: u64,
    /// End of the exposure, s.
    pub clock: f64,
    pub kind: String,
    pub protocol: Option<String>,
    pub exposure: f64,
    pub angle: Option<f64>,
    pub position: (f64, f64),
    pub temperature: f64,
    pub humidity: f64,
    pub sample: String,
    pub direction: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub clock: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    /// `path` locates the command in the script, one index per nesting level.
    Started { path: Vec<usize>, statement: String },
    Finished { path: Vec<usize>, statement: String, ok: bool },
    /// One state field changed.
    State { field: String, value: serde_json::Value },
    Measurement(MeasurementRecord),
    Warning { message: String },
    Fault(Fault),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fault {
    /// Empty when the script was rejected before it started.
    pub path: Vec<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Completed,
    Faulted,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExecutionLog {
    pub events: Vec<Event>,
}

impl ExecutionLog {
    pub fn records(&self) -> impl Iterator<Item = &MeasurementRecord> {
        self.events.iter().filter_map(|e| match &e.kind {
            EventKind::Measurement(r) => Some(r),
            _ => None,
        })
    }

    pub fn fault(&self) -> Option<&Fault> {
        self.events.iter().find_map(|e| match &e.kind {
            EventKind::Fault(f) => Some(f),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Outcome {
        if self.fault().is_some() {
            Outcome::Faulted
        } else {
            Outcome::Completed
        }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct Meta {
    outcome: Outcome,
    state: Snapshot,
}

pub fn write_log(log: &ExecutionLog, final_state: &Snapshot, path: impl AsRef<Path>) -> Result<()> {
    let meta = Meta {
        outcome: log.outcome(),
        state: final_state.clone(),
    };
    write_records(BufWriter::new(File::create(path)?), KIND, &meta, &log.events)
}

pub fn read_log(path: impl AsRef<Path>) -> Result<(ExecutionLog, Snapshot)> {
    let (meta, events): (Meta, Vec<Event>) = read_records(BufReader::new(File::open(path)?), KIND)?;
    Ok((ExecutionLog { events }, meta.state))
}
