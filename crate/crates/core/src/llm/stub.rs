//! Deterministic stand-in for a completion server.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

use crate::pipeline::{extract_user_text, ColorTarget};

/// What the stub does with one request.
#[derive(Debug, Clone, PartialEq)]
pub enum StubEntry {
    Reply(String),
    /// Sleep, then reply.
    Delay(Duration, String),
    /// Answer with an HTTP error status and no body.
    Status(u16),
}

impl StubEntry {
    pub fn reply(text: impl Into<String>) -> Self {
        StubEntry::Reply(text.into())
    }
}

type Responder = dyn Fn(&str) -> StubEntry + Send + Sync;

#[derive(Clone)]
pub enum StubScript {
    /// Entries are used in order, wrapping around.
    Cycle(Vec<StubEntry>),
    /// Computes the entry from the request prompt.
    Responder(Arc<Responder>),
}

impl std::fmt::Debug for StubScript {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StubScript::Cycle(entries) => f.debug_tuple("Cycle").field(entries).finish(),
            StubScript::Responder(_) => f.write_str("Responder(..)"),
        }
    }
}

impl StubScript {
    pub fn always(reply: impl Into<String>) -> Self {
        StubScript::Cycle(vec![StubEntry::Reply(reply.into())])
    }

    pub fn responder(f: impl Fn(&str) -> StubEntry + Send + Sync + 'static) -> Self {
        StubScript::Responder(Arc::new(f))
    }

    /// Keyword classifier over the user text embedded in a validation prompt.
    ///
    /// "maybe" anywhere → uncertain; otherwise the first color word (or one of
    /// a few color synonyms) → move; otherwise none.
    pub fn keyword_classifier() -> Self {
        Self::responder(|prompt| StubEntry::Reply(classify(prompt)))
    }
}

const SYNONYMS: [(&str, ColorTarget); 6] = [
    ("sky", ColorTarget::Blue),
    ("grass", ColorTarget::Green),
    ("tomato", ColorTarget::Red),
    ("banana", ColorTarget::Yellow),
    ("violet", ColorTarget::Purple),
    ("tangerine", ColorTarget::Orange),
];

fn classify(prompt: &str) -> String {
    let text = extract_user_text(prompt).unwrap_or_default().to_lowercase();
    let words: Vec<&str> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect();
    if words.contains(&"maybe") {
        return r#"{"command":"uncertain"}"#.to_owned();
    }
    let found = words.iter().find_map(|w| {
        ColorTarget::from_name(w).or_else(|| {
            SYNONYMS
                .iter()
                .find(|(syn, _)| syn == w)
                .map(|(_, color)| *color)
        })
    });
    match found {
        Some(color) => format!(r#"{{"command":"move","color":"{}"}}"#, color.name()),
        None => r#"{"command":"none"}"#.to_owned(),
    }
}

struct StubShared {
    script: StubScript,
    next: AtomicUsize,
    log: Mutex<Vec<Value>>,
}

/// Running stub endpoint. Dropping it stops the server.
pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<StubShared>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl StubServer {
    /// Serves `POST /completion` on an ephemeral loopback port.
    pub async fn start(script: StubScript) -> std::io::Result<Self> {
        Self::bind("127.0.0.1:0".parse().unwrap(), script).await
    }

    pub async fn bind(addr: SocketAddr, script: StubScript) -> std::io::Result<Self> {
        if let StubScript::Cycle(entries) = &script {
            if entries.is_empty() {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    "stub script is empty",
                ));
            }
        }
        let shared = Arc::new(StubShared {
            script,
            next: AtomicUsize::new(0),
            log: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/completion", post(handle))
            .with_state(shared.clone());
        let listener = TcpListener::bind(addr).await?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(Self {
            addr,
            shared,
            shutdown: Some(tx),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Every request body received so far, in arrival order.
    pub fn request_log(&self) -> Vec<Value> {
        self.shared.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.shared.log.lock().unwrap().len()
    }

    pub fn clear_log(&self) {
        self.shared.log.lock().unwrap().clear();
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn handle(State(shared): State<Arc<StubShared>>, Json(body): Json<Value>) -> Response {
    let prompt = body
        .get("prompt")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_owned();
    shared.log.lock().unwrap().push(body);
    let entry = match &shared.script {
        StubScript::Cycle(entries) => {
            let i = shared.next.fetch_add(1, Ordering::SeqCst);
            entries[i % entries.len()].clone()
        }
        StubScript::Responder(f) => f(&prompt),
    };
    match entry {
        StubEntry::Reply(content) => Json(json!({ "content": content })).into_response(),
        StubEntry::Delay(delay, content) => {
            tokio::time::sleep(delay).await;
            Json(json!({ "content": content })).into_response()
        }
        StubEntry::Status(code) => StatusCode::from_u16(code)
            .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
            .into_response(),
    }
}
