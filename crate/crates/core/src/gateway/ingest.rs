//! Newline-delimited JSON transcript ingest over TCP. One reply line per
//! input line; bad input never closes the connection.

use serde::Deserialize;
use serde_json::json;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::task::JoinSet;
use tracing::{debug, warn};

use super::Gateway;

/// Longest accepted line including the newline.
pub const MAX_LINE_LEN: usize = 64 * 1024;

#[derive(Deserialize)]
struct IngestLine {
    text: String,
    session: Option<String>,
}

pub(super) async fn run(listener: TcpListener, gateway: Gateway) {
    let mut stop = gateway.shutdown_signal();
    let mut connections = JoinSet::new();
    loop {
        tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, peer)) => {
                    debug!(%peer, "ingest connection");
                    connections.spawn(serve_connection(stream, gateway.clone()));
                }
                Err(err) => warn!(%err, "ingest accept failed"),
            },
            Some(_) = connections.join_next(), if !connections.is_empty() => {}
            _ = super::stopped(&mut stop) => break,
        }
    }
}

/// Reply for one line, without the newline.
pub(super) fn handle_line(gateway: &Gateway, line: &[u8]) -> String {
    let Ok(req) = serde_json::from_slice::<IngestLine>(line) else {
        return json!({"error": "malformed"}).to_string();
    };
    match gateway.ingest(req.session.as_deref(), &req.text) {
        Ok(id) => json!({"ok": true, "transcript": id}).to_string(),
        Err(e) => json!({"error": e.to_string()}).to_string(),
    }
}

async fn serve_connection(stream: TcpStream, gateway: Gateway) {
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    let mut overlong = false;
    loop {
        let buf = match reader.fill_buf().await {
            Ok(buf) => buf,
            Err(err) => {
                debug!(%err, "ingest read failed");
                return;
            }
        };
        if buf.is_empty() {
            return;
        }
        let (chunk, complete) = match buf.iter().position(|&b| b == b'\n') {
            Some(i) => (&buf[..=i], true),
            None => (buf, false),
        };
        let consumed = chunk.len();
        if !overlong {
            if line.len() + consumed > MAX_LINE_LEN {
                overlong = true;
                line.clear();
            } else {
                line.extend_from_slice(chunk);
            }
        }
        reader.consume(consumed);
        if !complete {
            continue;
        }
        let reply = if overlong {
            json!({"error": "line-too-long"}).to_string()
        } else {
            let body = line.trim_ascii();
            if body.is_empty() {
                line.clear();
                continue;
            }
            handle_line(&gateway, body)
        };
        line.clear();
        overlong = false;
        if write
            .write_all(format!("{reply}\n").as_bytes())
            .await
            .is_err()
        {
            return;
        }
    }
}
