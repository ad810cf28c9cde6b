use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use puppeteer::gateway::{serve, GatewayConfig};
use tracing_subscriber::EnvFilter;

/// Voice-command puppeteering gateway.
#[derive(Parser, Debug)]
#[command(version)]
struct Cli {
    /// JSON config file; absent fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Validate with two built-in keyword stubs instead of real LLM endpoints.
    #[arg(long)]
    stub_llm: bool,
    /// Where mirrored OSC goes (HOST:PORT).
    #[arg(long)]
    osc_dest: Option<SocketAddr>,
    /// HTTP/WebSocket listen address.
    #[arg(long)]
    http: Option<SocketAddr>,
    /// NDJSON transcript ingest listen address.
    #[arg(long)]
    ingest: Option<SocketAddr>,
    #[arg(long, default_value = "info")]
    log_level: String,
}

#[tokio::main]
async fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = EnvFilter::try_new(&cli.log_level).unwrap_or_else(|_| EnvFilter::new("info"));
    tracing_subscriber::fmt().with_env_filter(filter).init();

    let mut config = match &cli.config {
        Some(path) => match GatewayConfig::load(path) {
            Ok(config) => config,
            Err(err) => {
                eprintln!("config error: {err}");
                return ExitCode::from(2);
            }
        },
        None => GatewayConfig::default(),
    };
    config.llm.stub |= cli.stub_llm;
    if let Some(dest) = cli.osc_dest {
        config.osc.dest = dest;
    }
    if let Some(http) = cli.http {
        config.listen.http = http;
    }
    if let Some(ingest) = cli.ingest {
        config.listen.ingest = ingest;
    }

    let handle = match serve(config).await {
        Ok(handle) => handle,
        Err(err) => {
            eprintln!("startup failed: {err}");
            return ExitCode::FAILURE;
        }
    };
    if let Err(err) = tokio::signal::ctrl_c().await {
        eprintln!("cannot wait for ctrl-c: {err}");
    }
    handle.shutdown().await;
    ExitCode::SUCCESS
}
