//! Standalone sim robot: receives mirrored OSC and serves GET /status.
//!
//!     cargo run --example sim_robot -- --udp 127.0.0.1:9000 --http 127.0.0.1:9001

use std::net::SocketAddr;

use clap::Parser;
use puppeteer::sim::{SimRobot, SimRobotConfig};

#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:9000")]
    udp: SocketAddr,
    #[arg(long, default_value = "127.0.0.1:9001")]
    http: SocketAddr,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt().with_env_filter("info").init();
    let args = Args::parse();
    let robot = SimRobot::start(SimRobotConfig {
        udp: args.udp,
        http: args.http,
        ..SimRobotConfig::default()
    })
    .await?;
    println!(
        "osc on udp://{}, status on http://{}/status",
        robot.udp_addr(),
        robot.http_addr()
    );
    tokio::signal::ctrl_c().await?;
    let s = robot.status();
    println!(
        "received {} waypoints, last t={}",
        s.received_count, s.last_waypoint_t
    );
    Ok(())
}
