//! Composition root: transcript ingest, gate, validation, sessions, OSC
//! mirroring and the HTTP/WebSocket/TCP surfaces.
//!
//! Each session owns two tasks. The validation worker drains the session's
//! command queue in order; the ticker advances an executing trajectory and
//! mirrors the waypoints that fell due.

mod config;
mod events;
mod http;
mod ingest;

use std::collections::HashMap;
use std::io;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use thiserror::Error;
use tokio::sync::{watch, Notify};
use tokio::task::JoinHandle;
use tracing::{debug, info, warn};

pub use config::{
    EventsSection, GatewayConfig, ListenSection, LlmSection, MirrorSection, OscSection,
    PipelineSection, RobotSection,
};
pub use events::{Event, EventBody, EventBus, EventOutcome, EventStage};

use crate::error::ConfigError;
use crate::gate::{gate, GateOutcome, GatedCommandText, Transcript};
use crate::llm::{EndpointConfig, EndpointStatus, LlmPool, StubScript, StubServer};
use crate::osc::{
    log_send_failure, move_message, spawn_message, waypoint_message, OscMessage, OscSender,
};
use crate::pipeline::{
    validate, CommandQueue, PipelinePolicy, Stage, ValidationOutcome, ValidationReport,
};
use crate::session::{Rejection, Session, SessionConfig, SessionState};

pub const DEFAULT_SESSION: &str = "default";
pub const MAX_SESSIONS: usize = 64;
pub const MAX_SESSION_ID_LEN: usize = 64;
/// Longest transcript text accepted, in bytes.
pub const MAX_TEXT_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {what} on {addr}: {source}")]
    Bind {
        what: &'static str,
        addr: SocketAddr,
        source: io::Error,
    },
    #[error("cannot start stub llm: {0}")]
    Stub(io::Error),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("empty-text")]
    EmptyText,
    #[error("text-too-long")]
    TextTooLong,
    #[error("bad-session")]
    BadSession,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SpawnError {
    #[error("busy")]
    Busy,
    #[error("session-limit")]
    SessionLimit,
    #[error("bad-session")]
    BadSession,
    #[error("bad-base")]
    BadBase,
}

struct Job {
    transcript: u64,
    gated: GatedCommandText,
}

struct SessionSlot {
    session: Mutex<Session>,
    queue: Mutex<CommandQueue<Job>>,
    work: Notify,
    wake: Notify,
}

struct Inner {
    config: GatewayConfig,
    session_config: SessionConfig,
    policy: PipelinePolicy,
    pool: LlmPool,
    osc: OscSender,
    events: EventBus,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
    next_transcript: AtomicU64,
    /// Transcripts queued or under validation.
    pending: AtomicUsize,
    shutdown: watch::Sender<bool>,
    _stubs: Vec<StubServer>,
}

/// Shared handle to a running gateway core. Cheap to clone.
#[derive(Clone)]
pub struct Gateway {
    inner: Arc<Inner>,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= MAX_SESSION_ID_LEN && !id.chars().any(char::is_control)
}

fn stage_of(report: &ValidationReport) -> EventStage {
    match report.final_stage() {
        Stage::Quick => EventStage::Quick,
        Stage::Llm => EventStage::Llm,
    }
}

impl Gateway {
    /// Builds the core without binding any listener. With `llm.stub` set,
    /// two keyword-classifier stubs are started and used as the pool.
    pub async fn new(config: GatewayConfig) -> Result<Self, ServeError> {
        config.validate()?;
        let session_config = config.session_config()?;
        let mut stubs = Vec::new();
        let endpoints = if config.llm.stub {
            for _ in 0..2 {
                stubs.push(
                    StubServer::start(StubScript::keyword_classifier())
                        .await
                        .map_err(ServeError::Stub)?,
                );
            }
            stubs
                .iter()
                .map(|s| EndpointConfig::new(s.base_url()))
                .collect()
        } else {
            config.llm.endpoints.clone()
        };
        let pool = LlmPool::with_options(
            endpoints,
            config.llm.wire.clone(),
            Duration::from_millis(config.llm.probe_interval_ms),
        );
        let osc = OscSender::bind_any()
            .await
            .map_err(|source| ServeError::Bind {
                what: "osc sender",
                addr: "0.0.0.0:0".parse().unwrap(),
                source,
            })?
            .with_mtu(config.osc.mtu);
        let (shutdown, _) = watch::channel(false);
        let gateway = Gateway {
            inner: Arc::new(Inner {
                policy: config.policy(),
                events: EventBus::new(config.events.ring_size),
                session_config,
                pool,
                osc,
                sessions: Mutex::new(HashMap::new()),
                tasks: Mutex::new(Vec::new()),
                next_transcript: AtomicU64::new(1),
                pending: AtomicUsize::new(0),
                shutdown,
                _stubs: stubs,
                config,
            }),
        };
        gateway
            .slot_or_create(DEFAULT_SESSION)
            .expect("first session");
        Ok(gateway)
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.inner.config
    }

    pub fn events(&self) -> &EventBus {
        &self.inner.events
    }

    pub fn llm_status(&self) -> Vec<EndpointStatus> {
        self.inner.pool.status()
    }

    /// Transcripts accepted past the gate and not yet resolved.
    pub fn pending(&self) -> usize {
        self.inner.pending.load(Ordering::SeqCst)
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .inner
            .sessions
            .lock()
            .unwrap()
            .keys()
            .cloned()
            .collect();
        ids.sort();
        ids
    }

    fn slot(&self, id: &str) -> Option<Arc<SessionSlot>> {
        self.inner.sessions.lock().unwrap().get(id).cloned()
    }

    fn slot_or_create(&self, id: &str) -> Result<Arc<SessionSlot>, SpawnError> {
        let mut sessions = self.inner.sessions.lock().unwrap();
        if let Some(slot) = sessions.get(id) {
            return Ok(slot.clone());
        }
        if sessions.len() >= MAX_SESSIONS {
            return Err(SpawnError::SessionLimit);
        }
        let slot = Arc::new(SessionSlot {
            session: Mutex::new(Session::new(id, self.inner.session_config.clone())),
            queue: Mutex::new(CommandQueue::new(self.inner.config.pipeline.queue_depth)),
            work: Notify::new(),
            wake: Notify::new(),
        });
        sessions.insert(id.to_owned(), slot.clone());
        drop(sessions);
        let worker = tokio::spawn(validation_worker(
            self.inner.clone(),
            id.to_owned(),
            slot.clone(),
        ));
        let ticker = tokio::spawn(ticker(self.inner.clone(), id.to_owned(), slot.clone()));
        self.inner.tasks.lock().unwrap().extend([worker, ticker]);
        debug!(session = id, "session created");
        Ok(slot)
    }

    /// Gates a transcript and queues it for validation. Returns the
    /// transcript id carried by its events. The outcome arrives later as
    /// exactly one `command` event.
    pub fn ingest(&self, session: Option<&str>, text: &str) -> Result<u64, IngestError> {
        let session_id = session.unwrap_or(DEFAULT_SESSION);
        if !valid_session_id(session_id) {
            return Err(IngestError::BadSession);
        }
        if text.len() > MAX_TEXT_LEN {
            return Err(IngestError::TextTooLong);
        }
        let transcript = Transcript::new(session_id, text, 0).ok_or(IngestError::EmptyText)?;
        let id = self.inner.next_transcript.fetch_add(1, Ordering::SeqCst);
        let events = &self.inner.events;
        match gate(&transcript, &self.inner.config.wakeword) {
            GateOutcome::NoWakeword { similarity } => {
                events.publish(
                    session_id,
                    EventBody::Gate {
                        transcript: id,
                        passed: false,
                        similarity,
                    },
                );
                events.publish(
                    session_id,
                    EventBody::Command {
                        transcript: id,
                        stage: EventStage::Gate,
                        outcome: EventOutcome::NoWakeword,
                        detail: json!({"text": text, "similarity": similarity}),
                    },
                );
            }
            GateOutcome::Pass(gated) => {
                events.publish(
                    session_id,
                    EventBody::Gate {
                        transcript: id,
                        passed: true,
                        similarity: gated.wakeword_similarity,
                    },
                );
                let Some(slot) = self.slot(session_id) else {
                    events.publish(
                        session_id,
                        EventBody::Command {
                            transcript: id,
                            stage: EventStage::Session,
                            outcome: EventOutcome::Rejected,
                            detail: json!({"text": gated.text, "reason": "unknown-session"}),
                        },
                    );
                    return Ok(id);
                };
                self.inner.pending.fetch_add(1, Ordering::SeqCst);
                let evicted = slot.queue.lock().unwrap().push(Job {
                    transcript: id,
                    gated,
                });
                slot.work.notify_one();
                if let Some(old) = evicted {
                    self.inner.pending.fetch_sub(1, Ordering::SeqCst);
                    events.publish(
                        session_id,
                        EventBody::Command {
                            transcript: old.transcript,
                            stage: EventStage::Queue,
                            outcome: EventOutcome::Rejected,
                            detail: json!({"text": old.gated.text, "reason": "queue-overflow"}),
                        },
                    );
                }
            }
        }
        Ok(id)
    }

    /// Places the session's arm at home on `base`, creating the session if
    /// needed, and mirrors the spawn to the robot.
    pub async fn spawn(&self, session: Option<&str>, base: [f64; 3]) -> Result<Value, SpawnError> {
        let session_id = session.unwrap_or(DEFAULT_SESSION);
        if !valid_session_id(session_id) {
            return Err(SpawnError::BadSession);
        }
        if base.iter().any(|v| !v.is_finite()) {
            return Err(SpawnError::BadBase);
        }
        let slot = self.slot_or_create(session_id)?;
        let snapshot = {
            let mut session = slot.session.lock().unwrap();
            let robot = session
                .spawn(base, Instant::now())
                .map_err(|_| SpawnError::Busy)?;
            let pose = EventBody::Pose {
                q: *robot.q(),
                ee: robot.ee().position.into(),
                t: 0.0,
            };
            self.inner
                .events
                .publish(session_id, EventBody::State { value: "ready" });
            self.inner.events.publish(session_id, pose);
            snapshot(&session)
        };
        self.inner.send_osc(&spawn_message(base)).await;
        Ok(snapshot)
    }

    /// JSON view of a session for `/state`.
    pub fn state(&self, session: Option<&str>) -> Option<Value> {
        let slot = self.slot(session.unwrap_or(DEFAULT_SESSION))?;
        let session = slot.session.lock().unwrap();
        Some(snapshot(&session))
    }

    /// Waits until nothing is queued or under validation, up to `deadline`.
    /// Returns whether the gateway went idle.
    pub async fn drain(&self, deadline: Duration) -> bool {
        let until = tokio::time::Instant::now() + deadline;
        while self.pending() > 0 {
            if tokio::time::Instant::now() >= until {
                return false;
            }
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
        true
    }

    fn shutdown_signal(&self) -> watch::Receiver<bool> {
        self.inner.shutdown.subscribe()
    }

    /// Stops session tasks and tells stream subscribers to close.
    fn stop(&self) {
        let _ = self.inner.shutdown.send(true);
        for task in self.inner.tasks.lock().unwrap().drain(..) {
            task.abort();
        }
    }
}

impl Inner {
    async fn send_osc(&self, msg: &OscMessage) {
        if let Err(err) = self.osc.send(msg, self.config.osc.dest).await {
            log_send_failure(&err, self.config.osc.dest);
        }
    }

    fn publish_command(
        &self,
        session: &str,
        transcript: u64,
        stage: EventStage,
        outcome: EventOutcome,
        detail: Value,
    ) {
        self.events.publish(
            session,
            EventBody::Command {
                transcript,
                stage,
                outcome,
                detail,
            },
        );
    }

    /// Turns a validation report into a submit and its terminal event.
    async fn resolve(
        &self,
        session_id: &str,
        slot: &SessionSlot,
        job: Job,
        report: ValidationReport,
    ) {
        let stage = stage_of(&report);
        let text = job.gated.text;
        let calls = report.llm_calls;
        match report.outcome {
            ValidationOutcome::Valid(cmd) => {
                let accepted = {
                    let mut session = slot.session.lock().unwrap();
                    match session.submit(&cmd, Instant::now()) {
                        Ok(accepted) => {
                            self.publish_command(
                                session_id,
                                job.transcript,
                                stage,
                                EventOutcome::Valid,
                                json!({
                                    "text": text,
                                    "llm_calls": calls,
                                    "target": accepted.color,
                                    "waypoints": accepted.waypoints,
                                    "duration": accepted.duration,
                                }),
                            );
                            self.events
                                .publish(session_id, EventBody::State { value: "executing" });
                            true
                        }
                        Err(rejection) => {
                            let mut detail = json!({
                                "text": text,
                                "llm_calls": calls,
                                "target": cmd.target,
                                "reason": rejection.reason(),
                            });
                            if let Rejection::Infeasible(why) = &rejection {
                                detail["why"] = json!(why);
                            }
                            self.publish_command(
                                session_id,
                                job.transcript,
                                stage,
                                EventOutcome::Rejected,
                                detail,
                            );
                            false
                        }
                    }
                };
                if accepted {
                    self.send_osc(&move_message(cmd.target.name())).await;
                    slot.wake.notify_one();
                }
            }
            ValidationOutcome::Invalid(reason) => self.publish_command(
                session_id,
                job.transcript,
                stage,
                EventOutcome::Invalid,
                json!({"text": text, "llm_calls": calls, "reason": reason}),
            ),
            ValidationOutcome::Uncertain { revalidations } => self.publish_command(
                session_id,
                job.transcript,
                stage,
                EventOutcome::Uncertain,
                json!({"text": text, "llm_calls": calls, "revalidations": revalidations}),
            ),
        }
    }
}

fn snapshot(session: &Session) -> Value {
    let config = session.config();
    let targets: serde_json::Map<String, Value> = config
        .targets
        .iter()
        .map(|(color, p)| (color.name().to_owned(), json!([p.x, p.y, p.z])))
        .collect();
    let robot = session.state().robot();
    let execution = match session.state() {
        SessionState::Executing(_, exec) => json!({
            "target": exec.color,
            "waypoints": exec.trajectory.len(),
            "progress": exec.progress,
            "duration": exec.trajectory.duration(),
        }),
        _ => Value::Null,
    };
    json!({
        "session": session.id(),
        "state": session.state().name(),
        "mode": session.mode(),
        "q": robot.map(|r| r.q().to_vec()),
        "ee": robot.map(|r| <[f64; 3]>::from(r.ee().position)),
        "base": robot.map(|r| r.base),
        "execution": execution,
        "tutorial_mode": config.tutorial_mode,
        "targets": targets,
        "kinematics": &*config.params,
    })
}

async fn validation_worker(inner: Arc<Inner>, id: String, slot: Arc<SessionSlot>) {
    loop {
        let job = slot.queue.lock().unwrap().pop();
        let Some(job) = job else {
            slot.work.notified().await;
            continue;
        };
        let report = validate(&job.gated, &inner.policy, &inner.pool).await;
        debug!(session = %id, transcript = job.transcript, outcome = report.outcome.label(), "validated");
        inner.resolve(&id, &slot, job, report).await;
        inner.pending.fetch_sub(1, Ordering::SeqCst);
    }
}

async fn ticker(inner: Arc<Inner>, id: String, slot: Arc<SessionSlot>) {
    let period = Duration::from_millis(inner.config.mirror.tick_ms);
    loop {
        if !slot.session.lock().unwrap().is_executing() {
            slot.wake.notified().await;
            continue;
        }
        let mut interval = tokio::time::interval(period);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        interval.tick().await;
        loop {
            interval.tick().await;
            let (out, still_executing) = {
                let mut session = slot.session.lock().unwrap();
                let out = session.tick(Instant::now());
                if let (Some(last), Some(robot)) = (out.due.last(), session.state().robot()) {
                    let ee: [f64; 3] = robot.ee().position.into();
                    inner.events.publish(
                        &id,
                        EventBody::Pose {
                            q: *robot.q(),
                            ee,
                            t: last.wire_t,
                        },
                    );
                    if let Some(target) = out.completed {
                        inner
                            .events
                            .publish(&id, EventBody::Completed { target, ee });
                        inner
                            .events
                            .publish(&id, EventBody::State { value: "ready" });
                    }
                }
                (out, session.is_executing())
            };
            for due in &out.due {
                inner
                    .send_osc(&waypoint_message(&due.waypoint.q, due.wire_t))
                    .await;
            }
            if !still_executing {
                break;
            }
        }
    }
}

/// Resolves once shutdown has been requested.
async fn stopped(rx: &mut watch::Receiver<bool>) {
    let _ = rx.wait_for(|s| *s).await;
}

/// A gateway with its listeners bound.
pub struct GatewayHandle {
    gateway: Gateway,
    http_addr: SocketAddr,
    ingest_addr: SocketAddr,
    servers: Vec<JoinHandle<()>>,
}

impl GatewayHandle {
    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    pub fn ingest_addr(&self) -> SocketAddr {
        self.ingest_addr
    }

    /// Stops accepting input, lets queued validation finish for up to
    /// `2 * llm_timeout`, then stops everything.
    pub async fn shutdown(mut self) {
        let _ = self.gateway.inner.shutdown.send(true);
        let deadline = self.gateway.inner.policy.llm_timeout * 2;
        let drained = self.gateway.drain(deadline).await;
        if !drained {
            warn!(
                pending = self.gateway.pending(),
                "shutdown deadline reached with work pending"
            );
        }
        self.gateway.stop();
        for server in self.servers.drain(..) {
            server.abort();
        }
        info!("gateway stopped");
    }
}

impl Drop for GatewayHandle {
    fn drop(&mut self) {
        self.gateway.stop();
        for server in &self.servers {
            server.abort();
        }
    }
}

/// Builds the gateway and binds the HTTP/WebSocket and ingest listeners.
pub async fn serve(config: GatewayConfig) -> Result<GatewayHandle, ServeError> {
    let http = config.listen.http;
    let ingest = config.listen.ingest;
    let gateway = Gateway::new(config).await?;
    let http_listener = tokio::net::TcpListener::bind(http)
        .await
        .map_err(|source| ServeError::Bind {
            what: "http",
            addr: http,
            source,
        })?;
    let ingest_listener = tokio::net::TcpListener::bind(ingest)
        .await
        .map_err(|source| ServeError::Bind {
            what: "ingest",
            addr: ingest,
            source,
        })?;
    let http_addr = http_listener
        .local_addr()
        .expect("bound socket has an address");
    let ingest_addr = ingest_listener
        .local_addr()
        .expect("bound socket has an address");
    let servers = vec![
        tokio::spawn(http::run(http_listener, gateway.clone())),
        tokio::spawn(ingest::run(ingest_listener, gateway.clone())),
    ];
    info!(%http_addr, %ingest_addr, osc_dest = %gateway.config().osc.dest, "gateway listening");
    Ok(GatewayHandle {
        gateway,
        http_addr,
        ingest_addr,
        servers,
    })
}
