use axum::body::Bytes;
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;
use tracing::{debug, warn};

use super::{Gateway, SpawnError};

pub(super) fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
        .route("/state", get(state))
        .route("/spawn", post(spawn))
        .route("/command", post(command))
        .route("/events", get(events_ws))
        .route("/events/recent", get(recent))
        .route("/llm", get(llm))
        .with_state(gateway)
}

pub(super) async fn run(listener: TcpListener, gateway: Gateway) {
    let mut stop = gateway.shutdown_signal();
    let app = router(gateway);
    let result = axum::serve(listener, app)
        .with_graceful_shutdown(async move {
            super::stopped(&mut stop).await;
        })
        .await;
    if let Err(err) = result {
        warn!(%err, "http server stopped");
    }
}

fn error(status: StatusCode, reason: &str) -> Response {
    (status, Json(json!({"error": reason}))).into_response()
}

#[derive(Deserialize)]
struct SessionQuery {
    session: Option<String>,
}

async fn state(State(gw): State<Gateway>, Query(q): Query<SessionQuery>) -> Response {
    match gw.state(q.session.as_deref()) {
        Some(snapshot) => Json(snapshot).into_response(),
        None => error(StatusCode::NOT_FOUND, "unknown-session"),
    }
}

#[derive(Deserialize)]
struct SpawnBody {
    base: [f64; 3],
    session: Option<String>,
}

async fn spawn(State(gw): State<Gateway>, body: Bytes) -> Response {
    let Ok(req) = serde_json::from_slice::<SpawnBody>(&body) else {
        return error(StatusCode::BAD_REQUEST, "malformed");
    };
    match gw.spawn(req.session.as_deref(), req.base).await {
        Ok(snapshot) => Json(snapshot).into_response(),
        Err(e @ SpawnError::Busy) => error(StatusCode::CONFLICT, &e.to_string()),
        Err(e @ SpawnError::SessionLimit) => error(StatusCode::SERVICE_UNAVAILABLE, &e.to_string()),
        Err(e) => error(StatusCode::BAD_REQUEST, &e.to_string()),
    }
}

#[derive(Deserialize)]
pub(super) struct CommandBody {
    pub text: String,
    pub session: Option<String>,
}

async fn command(State(gw): State<Gateway>, body: Bytes) -> Response {
    let Ok(req) = serde_json::from_slice::<CommandBody>(&body) else {
        return error(StatusCode::BAD_REQUEST, "malformed");
    };
    match gw.ingest(req.session.as_deref(), &req.text) {
        Ok(id) => (
            StatusCode::ACCEPTED,
            Json(json!({"ok": true, "transcript": id})),
        )
            .into_response(),
        Err(e) => error(StatusCode::BAD_REQUEST, &e.to_string()),
    }
}

#[derive(Deserialize)]
struct RecentQuery {
    after: Option<u64>,
    limit: Option<usize>,
}

async fn recent(State(gw): State<Gateway>, Query(q): Query<RecentQuery>) -> Json<Value> {
    let events = gw
        .events()
        .recent(q.after.unwrap_or(0), q.limit.unwrap_or(usize::MAX));
    Json(json!(events))
}

async fn llm(State(gw): State<Gateway>) -> Json<Value> {
    Json(json!(gw.llm_status()))
}

#[derive(Deserialize)]
struct StreamQuery {
    /// Replay buffered events after this sequence number first.
    since: Option<u64>,
}

async fn events_ws(
    ws: WebSocketUpgrade,
    State(gw): State<Gateway>,
    Query(q): Query<StreamQuery>,
) -> Response {
    ws.on_upgrade(move |socket| stream_events(socket, gw, q.since))
}

/// Forwards events as JSON text frames. Client frames are read and ignored.
async fn stream_events(socket: WebSocket, gw: Gateway, since: Option<u64>) {
    let (backlog, mut rx) = match since {
        Some(after) => gw.events().subscribe_with_backlog(after),
        None => (Vec::new(), gw.events().subscribe()),
    };
    let mut stop = gw.shutdown_signal();
    let (mut sink, mut incoming) = socket.split();
    let mut last = since.unwrap_or(0);
    for event in backlog {
        last = event.seq;
        let text = serde_json::to_string(&event).expect("events serialize");
        if sink.send(Message::Text(text.into())).await.is_err() {
            return;
        }
    }
    loop {
        tokio::select! {
            received = rx.recv() => match received {
                Ok(event) if event.seq > last => {
                    last = event.seq;
                    let text = serde_json::to_string(&event).expect("events serialize");
                    if sink.send(Message::Text(text.into())).await.is_err() {
                        break;
                    }
                }
                Ok(_) => {}
                Err(RecvError::Lagged(skipped)) => warn!(skipped, "event subscriber lagged"),
                Err(RecvError::Closed) => break,
            },
            frame = incoming.next() => match frame {
                Some(Ok(Message::Close(_))) | Some(Err(_)) | None => break,
                Some(Ok(_)) => {}
            },
            _ = super::stopped(&mut stop) => break,
        }
    }
    let _ = sink.send(Message::Close(None)).await;
    debug!("event subscriber closed");
}
