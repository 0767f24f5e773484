//! HTTP front end for the interpret, confirm and execute workflow.
//!
//! Nothing reaches the beamline without a confirmation. `/interpret` and
//! `/script` only store a pending item; `/confirm` runs it on the one
//! simulator this service owns, and `/reject` drops it.
//!
//! | method | path         | body / query                   | reply                                   |
//! |--------|--------------|--------------------------------|-----------------------------------------|
//! | POST   | `/interpret` | `{text}`                       | `{id, tokens, labels, spans, rendered, warnings, blocked}` |
//! | POST   | `/script`    | `{text}`                       | `{id, rendered, warnings}`              |
//! | POST   | `/confirm`   | `{id}`                         | `{id, status, outcome, summary, state}` |
//! | POST   | `/reject`    | `{id}`                         | `{id, status}`                          |
//! | GET    | `/state`     |                                | state snapshot                          |
//! | GET    | `/history`   | `limit`                        | entries, oldest first                   |
//! | GET    | `/events`    | `since`, `timeout_ms`, `limit` | `{frames: [{seq, kind, payload}], last_seq}` |
//!
//! Errors come back as `{code, message, detail}`.

mod config;
mod error;
mod events;
mod service;

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub use config::{Clock, ManualClock, ServiceConfig, SystemClock, DEFAULT_EXPIRY};
pub use error::ApiError;
pub use events::{EventBus, Frame};
pub use service::{
    ConfirmResponse, HistoryEntry, InterpretResponse, LogSummary, Outcome, PendingInterpretation,
    RejectResponse, ScriptResponse, Service, Source, SpanView, Status,
};

const POLL_DEFAULT_MS: u64 = 25_000;
const POLL_MAX_MS: u64 = 60_000;
const FRAME_LIMIT: usize = 1000;

type Shared = State<Arc<Service>>;
type Reply<T> = Result<Json<T>, ApiError>;

pub fn router(svc: Arc<Service>) -> Router {
    Router::new()
        .route("/interpret", post(interpret))
        .route("/script", post(script))
        .route("/confirm", post(confirm))
        .route("/reject", post(reject))
        .route("/state", get(state))
        .route("/history", get(history))
        .route("/events", get(events))
        .with_state(svc)
}

/// Serve until `shutdown` resolves, then write the history file.
pub async fn serve(
    listener: TcpListener,
    svc: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let closer = svc.clone();
    axum::serve(listener, router(svc.clone()))
        .with_graceful_shutdown(async move {
            shutdown.await;
            closer.close();
        })
        .await?;
    svc.flush_history().map_err(std::io::Error::other)
}

fn body<T: DeserializeOwned>(bytes: &Bytes) -> Result<T, ApiError> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(ApiError::bad_request("request body is empty"));
    }
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

#[derive(Deserialize)]
struct TextBody {
    text: String,
}

#[derive(Deserialize)]
struct IdBody {
    id: String,
}

async fn interpret(State(svc): Shared, bytes: Bytes) -> Reply<InterpretResponse> {
    if !svc.has_model() {
        return Err(ApiError::no_model());
    }
    let TextBody { text } = body(&bytes)?;
    let s = svc.clone();
    tokio::task::spawn_blocking(move || s.interpret(&text))
        .await
        .map_err(|e| ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map(Json)
}

async fn script(State(svc): Shared, bytes: Bytes) -> Reply<ScriptResponse> {
    let TextBody { text } = body(&bytes)?;
    svc.submit_script(&text).map(Json)
}

async fn confirm(State(svc): Shared, bytes: Bytes) -> Reply<ConfirmResponse> {
    let IdBody { id } = body(&bytes)?;
    svc.confirm(&id).await.map(Json)
}

async fn reject(State(svc): Shared, bytes: Bytes) -> Reply<RejectResponse> {
    let IdBody { id } = body(&bytes)?;
    svc.reject(&id).map(Json)
}

async fn state(State(svc): Shared) -> Json<beamtalk_core::simulator::Snapshot> {
    Json(svc.state())
}

#[derive(Deserialize)]
struct HistoryQuery {
    limit: Option<usize>,
}

async fn history(State(svc): Shared, Query(q): Query<HistoryQuery>) -> Json<Vec<HistoryEntry>> {
    Json(svc.history(q.limit))
}

#[derive(Deserialize)]
struct EventsQuery {
    #[serde(default)]
    since: u64,
    timeout_ms: Option<u64>,
    limit: Option<usize>,
}

#[derive(Serialize)]
struct EventsReply {
    frames: Vec<Frame>,
    last_seq: u64,
}

async fn events(State(svc): Shared, Query(q): Query<EventsQuery>) -> Json<EventsReply> {
    let timeout = Duration::from_millis(q.timeout_ms.unwrap_or(POLL_DEFAULT_MS).min(POLL_MAX_MS));
    let limit = q.limit.unwrap_or(FRAME_LIMIT).clamp(1, FRAME_LIMIT);
    let bus = svc.events();
    let frames = tokio::select! {
        f = bus.wait_since(q.since, limit, timeout) => f,
        _ = svc.closed() => bus.since(q.since, limit),
    };
    Json(EventsReply { frames, last_seq: bus.last_seq() })
}
