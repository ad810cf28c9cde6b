//! Stand-in for the physical arm: applies mirrored OSC waypoints to its own
//! joint state and reports that state over HTTP.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::get;
use axum::{Json, Router};
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tracing::{debug, info};

use crate::osc::{OscArg, OscListener, OscMessage, ADDR_MOVE, ADDR_SPAWN, ADDR_WAYPOINT};
use crate::robot::{JointConfig, DOF, Q_HOME};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimState {
    pub q: JointConfig,
    pub last_waypoint_t: f64,
    pub received_count: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DropReason {
    #[error("unexpected arguments {0}")]
    BadArguments(String),
    #[error("stale waypoint t={t} < last {last}")]
    Stale { t: f64, last: f64 },
    #[error("unhandled address {0}")]
    UnknownAddress(String),
}

impl SimState {
    pub fn new(home: JointConfig) -> Self {
        Self {
            q: home,
            last_waypoint_t: 0.0,
            received_count: 0,
        }
    }

    /// Sets `q` from a `/puppeteer/waypoint` message (7 joints + timestamp).
    pub fn apply_waypoint(&mut self, msg: &OscMessage) -> Result<(), DropReason> {
        let floats = msg
            .floats()
            .filter(|f| f.len() == DOF + 1)
            .ok_or_else(|| DropReason::BadArguments(format!("{:?}", msg.args)))?;
        let t = f64::from(floats[DOF]);
        if !t.is_finite() || floats[..DOF].iter().any(|v| !v.is_finite()) {
            return Err(DropReason::BadArguments("non-finite value".to_owned()));
        }
        if t < self.last_waypoint_t {
            return Err(DropReason::Stale {
                t,
                last: self.last_waypoint_t,
            });
        }
        for (dst, src) in self.q.iter_mut().zip(&floats[..DOF]) {
            *dst = f64::from(*src);
        }
        self.last_waypoint_t = t;
        self.received_count += 1;
        Ok(())
    }

    /// Dispatches by address. A spawn restarts the waypoint clock; a move
    /// announcement carries nothing to apply.
    pub fn apply(&mut self, msg: &OscMessage) -> Result<(), DropReason> {
        match msg.address.as_str() {
            ADDR_WAYPOINT => self.apply_waypoint(msg),
            ADDR_MOVE => match msg.args.as_slice() {
                [OscArg::Str(_)] => Ok(()),
                other => Err(DropReason::BadArguments(format!("{other:?}"))),
            },
            ADDR_SPAWN => {
                self.last_waypoint_t = 0.0;
                Ok(())
            }
            other => Err(DropReason::UnknownAddress(other.to_owned())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimRobotConfig {
    pub udp: SocketAddr,
    pub http: SocketAddr,
    pub home: JointConfig,
}

impl Default for SimRobotConfig {
    fn default() -> Self {
        Self {
            udp: "127.0.0.1:9000".parse().unwrap(),
            http: "127.0.0.1:9001".parse().unwrap(),
            home: Q_HOME,
        }
    }
}

/// Running sim robot. Dropping it stops both listeners.
pub struct SimRobot {
    state: Arc<Mutex<SimState>>,
    udp_addr: SocketAddr,
    http_addr: SocketAddr,
    udp_task: JoinHandle<()>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl SimRobot {
    pub async fn start(config: SimRobotConfig) -> std::io::Result<Self> {
        let state = Arc::new(Mutex::new(SimState::new(config.home)));

        let listener = OscListener::bind(config.udp).await?;
        let udp_addr = listener.local_addr()?;
        let udp_state = state.clone();
        let udp_task = tokio::spawn(async move {
            let err = listener
                .run(move |msg, from| {
                    if let Err(reason) = udp_state.lock().unwrap().apply(&msg) {
                        debug!(%from, %reason, "sim robot dropped message");
                    }
                })
                .await;
            tracing::error!(%err, "sim robot udp loop stopped");
        });

        let app = Router::new()
            .route("/status", get(status))
            .route("/health", get(|| async { Json(json!({"status": "ok"})) }))
            .with_state(state.clone());
        let tcp = TcpListener::bind(config.http).await?;
        let http_addr = tcp.local_addr()?;
        let (tx, rx) = oneshot::channel();
        tokio::spawn(async move {
            let _ = axum::serve(tcp, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        info!(%udp_addr, %http_addr, "sim robot listening");
        Ok(Self {
            state,
            udp_addr,
            http_addr,
            udp_task,
            shutdown: Some(tx),
        })
    }

    pub fn udp_addr(&self) -> SocketAddr {
        self.udp_addr
    }

    pub fn http_addr(&self) -> SocketAddr {
        self.http_addr
    }

    /// Consistent copy of the current state.
    pub fn status(&self) -> SimState {
        self.state.lock().unwrap().clone()
    }
}

impl Drop for SimRobot {
    fn drop(&mut self) {
        self.udp_task.abort();
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn status(State(state): State<Arc<Mutex<SimState>>>) -> Json<Value> {
    let snapshot = state.lock().unwrap().clone();
    Json(json!(snapshot))
}
