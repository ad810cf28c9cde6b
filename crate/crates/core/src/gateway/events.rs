//! Event stream shared by the WebSocket endpoint and `/events/recent`.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;
use tokio::sync::broadcast;

use crate::pipeline::ColorTarget;
use crate::robot::JointConfig;

/// Pipeline stage that produced a terminal command event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EventStage {
    Gate,
    Session,
    Queue,
    Quick,
    Llm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventOutcome {
    Valid,
    Invalid,
    Uncertain,
    Rejected,
    NoWakeword,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EventBody {
    Pose {
        q: JointConfig,
        ee: [f64; 3],
        /// Seconds since spawn, same clock as the mirrored waypoints.
        t: f64,
    },
    State {
        value: &'static str,
    },
    Gate {
        transcript: u64,
        passed: bool,
        similarity: f64,
    },
    /// Exactly one per ingested transcript.
    Command {
        transcript: u64,
        stage: EventStage,
        outcome: EventOutcome,
        detail: Value,
    },
    Completed {
        target: ColorTarget,
        ee: [f64; 3],
    },
}

impl EventBody {
    pub fn is_terminal(&self) -> bool {
        matches!(self, EventBody::Command { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Event {
    pub seq: u64,
    pub session: String,
    /// Milliseconds since the gateway started.
    pub ts_ms: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

struct Ring {
    next_seq: u64,
    events: VecDeque<Event>,
}

/// Sequenced broadcast with a bounded replay buffer. Publishing never
/// blocks on subscribers; a slow subscriber lags and skips.
pub struct EventBus {
    ring: Mutex<Ring>,
    capacity: usize,
    tx: broadcast::Sender<Event>,
    epoch: Instant,
}

impl EventBus {
    pub fn new(capacity: usize) -> Self {
        let (tx, _) = broadcast::channel(capacity.max(16));
        Self {
            ring: Mutex::new(Ring {
                next_seq: 1,
                events: VecDeque::with_capacity(capacity),
            }),
            capacity,
            tx,
            epoch: Instant::now(),
        }
    }

    pub fn publish(&self, session: &str, body: EventBody) -> u64 {
        let mut ring = self.ring.lock().unwrap();
        let event = Event {
            seq: ring.next_seq,
            session: session.to_owned(),
            ts_ms: self.epoch.elapsed().as_millis() as u64,
            body,
        };
        ring.next_seq += 1;
        if ring.events.len() == self.capacity {
            ring.events.pop_front();
        }
        ring.events.push_back(event.clone());
        // Sent under the lock so subscribers see seq order.
        let _ = self.tx.send(event.clone());
        event.seq
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Event> {
        self.tx.subscribe()
    }

    /// Buffered events with `seq > after`, oldest first, at most `limit`
    /// of the newest.
    pub fn recent(&self, after: u64, limit: usize) -> Vec<Event> {
        let ring = self.ring.lock().unwrap();
        let matching: Vec<&Event> = ring.events.iter().filter(|e| e.seq > after).collect();
        let skip = matching.len().saturating_sub(limit);
        matching[skip..].iter().map(|e| (*e).clone()).collect()
    }

    /// Subscribes and returns the buffered backlog atomically, so no event
    /// falls between the two.
    pub fn subscribe_with_backlog(&self, after: u64) -> (Vec<Event>, broadcast::Receiver<Event>) {
        let ring = self.ring.lock().unwrap();
        let rx = self.tx.subscribe();
        let backlog = ring
            .events
            .iter()
            .filter(|e| e.seq > after)
            .cloned()
            .collect();
        (backlog, rx)
    }

    pub fn last_seq(&self) -> u64 {
        self.ring.lock().unwrap().next_seq - 1
    }
}
