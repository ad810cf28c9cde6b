//! Whole stack on loopback: sim robot, gateway with stub LLMs, a spawn over
//! HTTP and a transcript over the NDJSON ingest socket. Waits for the move
//! to complete and compares the sim robot with the virtual arm.
//!
//!     cargo run --release --example end_to_end_mirror -- "Blueberry, move to orange"

use std::time::{Duration, Instant};

use puppeteer::gateway::{serve, EventBody, GatewayConfig};
use puppeteer::sim::{SimRobot, SimRobotConfig};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let text = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "Blueberry, move to orange".to_owned());

    let sim = SimRobot::start(SimRobotConfig {
        udp: "127.0.0.1:0".parse()?,
        http: "127.0.0.1:0".parse()?,
        ..SimRobotConfig::default()
    })
    .await?;
    let mut config = GatewayConfig::default();
    config.llm.stub = true;
    config.osc.dest = sim.udp_addr();
    config.listen.http = "127.0.0.1:0".parse()?;
    config.listen.ingest = "127.0.0.1:0".parse()?;
    let gateway = serve(config).await?;
    let http = reqwest::Client::new();
    let base = format!("http://{}", gateway.http_addr());

    let spawned: Value = http
        .post(format!("{base}/spawn"))
        .json(&json!({"base": [0.0, 0.0, 0.0]}))
        .send()
        .await?
        .json()
        .await?;
    println!("spawned: state={} ee={}", spawned["state"], spawned["ee"]);

    let mut events = gateway.gateway().events().subscribe();
    let started = Instant::now();
    let mut ingest = BufReader::new(TcpStream::connect(gateway.ingest_addr()).await?);
    ingest
        .get_mut()
        .write_all(format!("{}\n", json!({"session": "default", "text": text})).as_bytes())
        .await?;
    let mut ack = String::new();
    ingest.read_line(&mut ack).await?;
    println!("ingest ack: {}", ack.trim());

    let mut poses = 0;
    loop {
        let event = tokio::time::timeout(Duration::from_secs(30), events.recv()).await??;
        match &event.body {
            EventBody::Pose { .. } => poses += 1,
            EventBody::Command {
                stage,
                outcome,
                detail,
                ..
            } => {
                println!("command: stage={stage:?} outcome={outcome:?} detail={detail}");
                if !matches!(outcome, puppeteer::gateway::EventOutcome::Valid) {
                    return Ok(());
                }
            }
            EventBody::Completed { target, ee } => {
                println!("completed {target} at {ee:.4?} after {poses} pose events");
                break;
            }
            other => println!("{other:?}"),
        }
    }
    let elapsed = started.elapsed();
    tokio::time::sleep(Duration::from_millis(50)).await;

    let virtual_state = gateway.gateway().state(None).expect("default session");
    let sim_status: Value = http
        .get(format!("http://{}/status", sim.http_addr()))
        .send()
        .await?
        .json()
        .await?;
    let virtual_q: Vec<f64> = serde_json::from_value(virtual_state["q"].clone())?;
    let sim_q: Vec<f64> = serde_json::from_value(sim_status["q"].clone())?;
    let worst = virtual_q
        .iter()
        .zip(&sim_q)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!(
        "sim robot received {} waypoints, largest joint difference {worst:.2e} rad, wall time {:.3} s",
        sim_status["received_count"], elapsed.as_secs_f64()
    );
    gateway.shutdown().await;
    Ok(())
}
