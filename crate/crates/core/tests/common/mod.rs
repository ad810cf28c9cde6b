#![allow(dead_code)]

use std::net::SocketAddr;
use std::time::Duration;

use puppeteer::gateway::{
    serve, Event, EventBody, EventOutcome, EventStage, Gateway, GatewayConfig, GatewayHandle,
};
use serde_json::Value;

/// Gateway on ephemeral loopback ports with built-in stub LLMs.
pub async fn stub_gateway(
    osc_dest: SocketAddr,
    tweak: impl FnOnce(&mut GatewayConfig),
) -> GatewayHandle {
    let mut config = GatewayConfig::default();
    config.llm.stub = true;
    config.osc.dest = osc_dest;
    config.listen.http = "127.0.0.1:0".parse().unwrap();
    config.listen.ingest = "127.0.0.1:0".parse().unwrap();
    tweak(&mut config);
    serve(config).await.expect("gateway starts")
}

/// A loopback port nobody listens on, for OSC that should go nowhere.
pub fn discard_addr() -> SocketAddr {
    let socket = std::net::UdpSocket::bind("127.0.0.1:0").unwrap();
    socket.local_addr().unwrap()
}

pub fn terminal_for(events: &[Event], transcript: u64) -> Vec<Event> {
    events
        .iter()
        .filter(|e| matches!(&e.body, EventBody::Command { transcript: t, .. } if *t == transcript))
        .cloned()
        .collect()
}

/// Polls the event ring until the transcript's command event shows up.
pub async fn wait_terminal(gw: &Gateway, transcript: u64, within: Duration) -> Event {
    let deadline = tokio::time::Instant::now() + within;
    loop {
        if let Some(e) = terminal_for(&gw.events().recent(0, usize::MAX), transcript)
            .into_iter()
            .next()
        {
            return e;
        }
        assert!(
            tokio::time::Instant::now() < deadline,
            "no terminal event for transcript {transcript}"
        );
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
}

pub fn command_parts(e: &Event) -> (EventStage, EventOutcome, Value) {
    match &e.body {
        EventBody::Command {
            stage,
            outcome,
            detail,
            ..
        } => (*stage, *outcome, detail.clone()),
        other => panic!("not a command event: {other:?}"),
    }
}

/// Waits until the session reports `state`.
pub async fn wait_state(gw: &Gateway, session: &str, state: &str, within: Duration) {
    let deadline = tokio::time::Instant::now() + within;
    while gw.state(Some(session)).expect("session exists")["state"] != state {
        assert!(
            tokio::time::Instant::now() < deadline,
            "session {session} never became {state}"
        );
        tokio::time::sleep(Duration::from_millis(2)).await;
    }
}
