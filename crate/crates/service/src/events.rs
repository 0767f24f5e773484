use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tokio::sync::watch;

/// One entry of the event stream. `seq` starts at 1 and increases by one per
/// frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub seq: u64,
    pub kind: String,
    pub payload: Value,
}

/// Append-only frame list with wake-ups for long-polling readers.
pub struct EventBus {
    frames: Mutex<Vec<Frame>>,
    last: watch::Sender<u64>,
}

impl Default for EventBus {
    fn default() -> Self {
        EventBus { frames: Mutex::new(Vec::new()), last: watch::Sender::new(0) }
    }
}

impl EventBus {
    pub fn publish(&self, kind: &str, payload: Value) -> u64 {
        let mut frames = self.frames.lock().unwrap();
        let seq = frames.len() as u64 + 1;
        frames.push(Frame { seq, kind: kind.to_string(), payload });
        self.last.send_replace(seq);
        seq
    }

    /// Publish a simulator event; its clock and `extra` fields join the payload.
    pub fn publish_event(&self, event: &beamtalk_core::simulator::Event, extra: &[(&str, Value)]) -> u64 {
        let Value::Object(mut whole) = serde_json::to_value(event).expect("events serialize") else {
            unreachable!("events serialize as objects")
        };
        let kind = whole.remove("kind").and_then(|k| k.as_str().map(String::from)).unwrap_or_default();
        let mut payload = match whole.remove("payload") {
            Some(Value::Object(m)) => m,
            Some(other) => Map::from_iter([("value".to_string(), other)]),
            None => Map::new(),
        };
        payload.insert("clock".into(), whole.remove("clock").unwrap_or(Value::Null));
        for (k, v) in extra {
            payload.insert(k.to_string(), v.clone());
        }
        self.publish(&kind, Value::Object(payload))
    }

    pub fn last_seq(&self) -> u64 {
        *self.last.borrow()
    }

    pub fn since(&self, seq: u64, limit: usize) -> Vec<Frame> {
        let frames = self.frames.lock().unwrap();
        let from = (seq as usize).min(frames.len());
        frames[from..].iter().take(limit).cloned().collect()
    }

    /// Frames after `seq`, waiting up to `timeout` for the first one.
    pub async fn wait_since(&self, seq: u64, limit: usize, timeout: Duration) -> Vec<Frame> {
        let mut rx = self.last.subscribe();
        let _ = tokio::time::timeout(timeout, rx.wait_for(|&last| last > seq)).await;
        self.since(seq, limit)
    }
}
