use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::http::StatusCode;
use beamtalk_core::interpreter::{interpret_labeled, parse_script, render_script, EntitySpan, Script, Warning};
use beamtalk_core::records::{read_records, write_records};
use beamtalk_core::simulator::{conflicts, execute_with, snapshot, BeamlineState, ExecutionLog, Fault, Snapshot};
use beamtalk_core::tagger::{tokenize, TaggerModel};
use beamtalk_core::{Error, Label};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::config::{Clock, ServiceConfig, SystemClock};
use crate::error::ApiError;
use crate::events::EventBus;

const HISTORY_KIND: &str = "history";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Confirmed,
    Rejected,
    Expired,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Text,
    Script,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PendingInterpretation {
    pub id: String,
    pub source: Source,
    pub text: String,
    pub script: Script,
    pub rendered: String,
    pub warnings: Vec<Warning>,
    pub created_ms: u64,
    pub status: Status,
}

impl PendingInterpretation {
    fn blocked(&self) -> bool {
        self.warnings.iter().any(|w| w.blocking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Executed,
    Rejected,
    Failed,
}

/// What an execution left behind; `first_seq..=last_seq` are its frames on
/// the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSummary {
    pub events: usize,
    pub measurements: usize,
    pub fault: Option<Fault>,
    pub clock_start: f64,
    pub clock_end: f64,
    pub first_seq: Option<u64>,
    pub last_seq: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub id: String,
    pub source: Source,
    pub text: String,
    pub rendered: String,
    pub outcome: Outcome,
    pub submitted_ms: u64,
    pub completed_ms: u64,
    pub log: Option<LogSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanView {
    #[serde(flatten)]
    pub span: EntitySpan,
    /// Byte offsets of the span in the submitted text, end exclusive.
    pub text_start: usize,
    pub text_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpretResponse {
    pub id: String,
    pub status: Status,
    pub tokens: Vec<String>,
    pub labels: Vec<Label>,
    pub spans: Vec<SpanView>,
    pub rendered: String,
    pub warnings: Vec<Warning>,
    pub blocked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScriptResponse {
    pub id: String,
    pub status: Status,
    pub rendered: String,
    pub warnings: Vec<Warning>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfirmResponse {
    pub id: String,
    pub status: Status,
    pub outcome: Outcome,
    pub summary: LogSummary,
    pub state: Snapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectResponse {
    pub id: String,
    pub status: Status,
}

/// One simulated beamline behind a confirm-before-execute gate.
pub struct Service {
    cfg: ServiceConfig,
    model: Option<TaggerModel>,
    clock: Arc<dyn Clock>,
    pending: Mutex<HashMap<String, PendingInterpretation>>,
    history: Mutex<Vec<HistoryEntry>>,
    beam: Mutex<BeamlineState>,
    bus: EventBus,
    executor: tokio::sync::Mutex<()>,
    closing: watch::Sender<bool>,
}

impl Service {
    pub fn new(cfg: ServiceConfig, model: Option<TaggerModel>) -> beamtalk_core::Result<Service> {
        Service::with_clock(cfg, model, Arc::new(SystemClock))
    }

    pub fn with_clock(
        cfg: ServiceConfig,
        model: Option<TaggerModel>,
        clock: Arc<dyn Clock>,
    ) -> beamtalk_core::Result<Service> {
        let history = match &cfg.history_path {
            Some(p) if p.exists() => {
                let (_, entries): (BTreeMap<String, Value>, _) =
                    read_records(BufReader::new(File::open(p)?), HISTORY_KIND)?;
                entries
            }
            _ => Vec::new(),
        };
        Ok(Service {
            cfg,
            model,
            clock,
            pending: Mutex::new(HashMap::new()),
            history: Mutex::new(history),
            beam: Mutex::new(BeamlineState::default()),
            bus: EventBus::default(),
            executor: tokio::sync::Mutex::new(()),
            closing: watch::Sender::new(false),
        })
    }

    pub fn has_model(&self) -> bool {
        self.model.is_some()
    }

    pub fn events(&self) -> &EventBus {
        &self.bus
    }

    pub fn state(&self) -> Snapshot {
        snapshot(&self.beam.lock().unwrap())
    }

    /// The most recent `limit` entries, oldest first.
    pub fn history(&self, limit: Option<usize>) -> Vec<HistoryEntry> {
        let h = self.history.lock().unwrap();
        let skip = limit.map_or(0, |n| h.len().saturating_sub(n));
        h[skip..].to_vec()
    }

    pub fn pending(&self, id: &str) -> Option<PendingInterpretation> {
        self.pending.lock().unwrap().get(id).cloned()
    }

    pub fn interpret(&self, text: &str) -> Result<InterpretResponse, ApiError> {
        let model = self.model.as_ref().ok_or_else(ApiError::no_model)?;
        if text.trim().is_empty() {
            return Err(ApiError::bad_request("text is empty"));
        }
        let seq = tokenize(text);
        let labels = model.predict(&seq);
        let mut i = interpret_labeled(&seq.tokens, &labels);
        for f in conflicts(&i.script, &self.cfg.sim) {
            let at: Vec<String> = f.path.iter().map(|p| (p + 1).to_string()).collect();
            i.warnings.push(Warning {
                message: format!("command {}: {}", at.join("."), f.message),
                blocking: true,
                spans: Vec::new(),
            });
        }
        let spans = i
            .spans
            .iter()
            .map(|s| SpanView {
                span: s.clone(),
                text_start: seq.char_spans[s.start].0,
                text_end: seq.char_spans[s.end - 1].1,
            })
            .collect();
        let item = self.store(Source::Text, text, i.script, i.rendered, i.warnings);
        Ok(InterpretResponse {
            blocked: item.blocked(),
            id: item.id,
            status: item.status,
            tokens: i.tokens,
            labels: i.labels,
            spans,
            rendered: item.rendered,
            warnings: item.warnings,
        })
    }

    /// Queue a pseudo-script for confirmation, bypassing the tagger.
    pub fn submit_script(&self, text: &str) -> Result<ScriptResponse, ApiError> {
        if text.trim().is_empty() {
            return Err(ApiError::bad_request("script is empty"));
        }
        let script = parse_script(text).map_err(|e| match e {
            Error::Syntax { line, column, message } => {
                ApiError::bad_request(format!("line {line}, column {column}: {message}"))
                    .with_detail(json!({ "line": line, "column": column }))
            }
            other => ApiError::bad_request(other.to_string()),
        })?;
        let mut problems: Vec<Value> = script
            .violations()
            .into_iter()
            .map(|(path, v)| json!({ "path": path, "argument": v.argument, "message": v.message }))
            .collect();
        problems.extend(
            conflicts(&script, &self.cfg.sim)
                .into_iter()
                .map(|f| json!({ "path": f.path, "message": f.message })),
        );
        if let Some(first) = problems.first() {
            let message = first["message"].as_str().unwrap_or_default().to_string();
            return Err(ApiError::bad_request(message).with_detail(json!({ "violations": problems })));
        }
        let rendered = render_script(&script);
        let item = self.store(Source::Script, text, script, rendered, Vec::new());
        Ok(ScriptResponse { id: item.id, status: item.status, rendered: item.rendered, warnings: item.warnings })
    }

    fn store(
        &self,
        source: Source,
        text: &str,
        script: Script,
        rendered: String,
        warnings: Vec<Warning>,
    ) -> PendingInterpretation {
        let item = PendingInterpretation {
            id: uuid::Uuid::new_v4().simple().to_string(),
            source,
            text: text.to_string(),
            script,
            rendered,
            warnings,
            created_ms: self.clock.now_ms(),
            status: Status::Pending,
        };
        self.pending.lock().unwrap().insert(item.id.clone(), item.clone());
        item
    }

    /// Move a pending item to `to`. This is the only place a status changes,
    /// and it happens under the pending lock, so each id transitions once.
    fn transition(&self, id: &str, to: Status) -> Result<PendingInterpretation, ApiError> {
        let now = self.clock.now_ms();
        let expiry = self.cfg.expiry.as_millis() as u64;
        let mut pending = self.pending.lock().unwrap();
        let item = pending.get_mut(id).ok_or_else(|| ApiError::not_found(id))?;
        if item.status == Status::Pending && now.saturating_sub(item.created_ms) >= expiry {
            item.status = Status::Expired;
        }
        if item.status != Status::Pending {
            let status = serde_json::to_value(item.status).unwrap();
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "conflict",
                format!("`{id}` is {} and can no longer change", status.as_str().unwrap_or_default()),
            )
            .with_detail(json!({ "id": id, "status": status })));
        }
        if to == Status::Confirmed && item.blocked() {
            let warnings: Vec<&Warning> = item.warnings.iter().filter(|w| w.blocking).collect();
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "blocked",
                "the interpretation has blocking warnings and cannot run",
            )
            .with_detail(json!({ "id": id, "warnings": warnings })));
        }
        item.status = to;
        Ok(item.clone())
    }

    pub fn reject(&self, id: &str) -> Result<RejectResponse, ApiError> {
        let item = self.transition(id, Status::Rejected)?;
        self.record(HistoryEntry {
            id: item.id.clone(),
            source: item.source,
            text: item.text,
            rendered: item.rendered,
            outcome: Outcome::Rejected,
            submitted_ms: item.created_ms,
            completed_ms: self.clock.now_ms(),
            log: None,
        });
        Ok(RejectResponse { id: item.id, status: Status::Rejected })
    }

    /// Confirm and run. Confirmations wait their turn on a FIFO executor.
    pub async fn confirm(self: &Arc<Self>, id: &str) -> Result<ConfirmResponse, ApiError> {
        let item = self.transition(id, Status::Confirmed)?;
        let _turn = self.executor.lock().await;
        let svc = self.clone();
        let script = item.script.clone();
        let run_id = item.id.clone();
        let (state, log, first, last) = tokio::task::spawn_blocking(move || svc.run(&run_id, &script))
            .await
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
        let outcome = if log.fault().is_some() { Outcome::Failed } else { Outcome::Executed };
        let summary = LogSummary {
            events: log.events.len(),
            measurements: log.records().count(),
            fault: log.fault().cloned(),
            clock_start: log.events.first().map_or(state.clock, |e| e.clock),
            clock_end: state.clock,
            first_seq: first,
            last_seq: last,
        };
        self.record(HistoryEntry {
            id: item.id.clone(),
            source: item.source,
            text: item.text,
            rendered: item.rendered,
            outcome,
            submitted_ms: item.created_ms,
            completed_ms: self.clock.now_ms(),
            log: Some(summary.clone()),
        });
        Ok(ConfirmResponse { id: item.id, status: Status::Confirmed, outcome, summary, state: snapshot(&state) })
    }

    fn run(&self, id: &str, script: &Script) -> (BeamlineState, ExecutionLog, Option<u64>, Option<u64>) {
        let start = self.beam.lock().unwrap().clone();
        let (wall0, clock0) = (Instant::now(), start.clock);
        let scale = self.cfg.time_scale;
        let tag = [("execution", json!(id))];
        let (mut first, mut last) = (None, None);
        let (end, log) = execute_with(&start, script, &self.cfg.sim, &mut |event, state| {
            if scale > 0.0 {
                let due = wall0 + Duration::from_secs_f64((event.clock - clock0).max(0.0) / scale);
                if let Some(wait) = due.checked_duration_since(Instant::now()) {
                    std::thread::sleep(wait);
                }
            }
            *self.beam.lock().unwrap() = state.clone();
            let seq = self.bus.publish_event(event, &tag);
            first.get_or_insert(seq);
            last = Some(seq);
        });
        *self.beam.lock().unwrap() = end.clone();
        (end, log, first, last)
    }

    fn record(&self, entry: HistoryEntry) {
        let payload = serde_json::to_value(&entry).unwrap();
        self.history.lock().unwrap().push(entry);
        self.bus.publish("history", payload);
    }

    /// Write the history file, if one is configured.
    pub fn flush_history(&self) -> beamtalk_core::Result<()> {
        let Some(path) = &self.cfg.history_path else { return Ok(()) };
        let h = self.history.lock().unwrap();
        write_records(BufWriter::new(File::create(path)?), HISTORY_KIND, &BTreeMap::<String, Value>::new(), &h)
    }

    /// Wake long-polling readers so a graceful shutdown does not wait on them.
    pub fn close(&self) {
        self.closing.send_replace(true);
    }

    pub(crate) async fn closed(&self) {
        let mut rx = self.closing.subscribe();
        let _ = rx.wait_for(|&c| c).await;
    }
}
