//! Round-robin client over locally hosted completion endpoints.
//!
//! Endpoints speak a small JSON protocol: `POST <base_url><path>` with
//! `{"prompt": ..., "n_predict": 128, "temperature": 0}` and a reply of
//! `{"content": ...}`. An endpoint is unhealthy after three consecutive
//! failures; it then gets one probe request per probe interval until it
//! answers again.

mod stub;

use std::future::Future;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;
use tracing::{debug, warn};

pub use stub::{StubEntry, StubScript, StubServer};

pub const FAILURE_THRESHOLD: u32 = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no healthy llm endpoint")]
    PoolExhausted,
    #[error("llm unavailable: {0}")]
    Unavailable(String),
}

/// Anything that turns a prompt into reply text within a deadline.
pub trait Completer: Send + Sync {
    fn complete(
        &self,
        prompt: &str,
        timeout: Duration,
    ) -> impl Future<Output = Result<String, LlmError>> + Send;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
}

fn default_path() -> String {
    "/completion".to_owned()
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: default_path(),
        }
    }

    pub fn url(&self) -> String {
        format!("{}{}", self.base_url.trim_end_matches('/'), self.path)
    }
}

/// Field names and sampling knobs of the completion request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireFormat {
    pub prompt_field: String,
    pub content_field: String,
    pub n_predict: u32,
    pub temperature: u32,
}

impl Default for WireFormat {
    fn default() -> Self {
        Self {
            prompt_field: "prompt".to_owned(),
            content_field: "content".to_owned(),
            n_predict: 128,
            temperature: 0,
        }
    }
}

impl WireFormat {
    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = Map::new();
        body.insert(self.prompt_field.clone(), Value::from(prompt));
        body.insert("n_predict".to_owned(), Value::from(self.n_predict));
        body.insert("temperature".to_owned(), Value::from(self.temperature));
        Value::Object(body)
    }
}

#[derive(Debug, Clone)]
struct EndpointState {
    config: EndpointConfig,
    consecutive_failures: u32,
    next_probe_at: Option<Instant>,
    probe_in_flight: bool,
}

impl EndpointState {
    fn healthy(&self) -> bool {
        self.consecutive_failures < FAILURE_THRESHOLD
    }

    fn probe_due(&self, now: Instant) -> bool {
        !self.probe_in_flight && self.next_probe_at.is_some_and(|at| now >= at)
    }
}

/// Point-in-time view of one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointStatus {
    pub url: String,
    pub healthy: bool,
    pub consecutive_failures: u32,
}

#[derive(Debug)]
struct PoolState {
    endpoints: Vec<EndpointState>,
    cursor: usize,
}

#[derive(Debug)]
pub struct LlmPool {
    client: reqwest::Client,
    state: Mutex<PoolState>,
    wire: WireFormat,
    probe_interval: Duration,
}

impl LlmPool {
    /// Panics if `endpoints` is empty.
    pub fn new(endpoints: Vec<EndpointConfig>) -> Self {
        Self::with_options(endpoints, WireFormat::default(), Duration::from_secs(30))
    }

    pub fn with_options(
        endpoints: Vec<EndpointConfig>,
        wire: WireFormat,
        probe_interval: Duration,
    ) -> Self {
        assert!(
            !endpoints.is_empty(),
            "llm pool needs at least one endpoint"
        );
        let endpoints = endpoints
            .into_iter()
            .map(|config| EndpointState {
                config,
                consecutive_failures: 0,
                next_probe_at: None,
                probe_in_flight: false,
            })
            .collect();
        Self {
            client: reqwest::Client::new(),
            state: Mutex::new(PoolState {
                endpoints,
                cursor: 0,
            }),
            wire,
            probe_interval,
        }
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn status(&self) -> Vec<EndpointStatus> {
        self.state
            .lock()
            .unwrap()
            .endpoints
            .iter()
            .map(|e| EndpointStatus {
                url: e.config.url(),
                healthy: e.healthy(),
                consecutive_failures: e.consecutive_failures,
            })
            .collect()
    }

    /// Picks the endpoint under the cursor, skipping unhealthy ones, and
    /// advances the cursor past it.
    pub fn next_instance(&self) -> Result<(usize, EndpointConfig), LlmError> {
        self.next_instance_at(Instant::now())
    }

    fn next_instance_at(&self, now: Instant) -> Result<(usize, EndpointConfig), LlmError> {
        let mut state = self.state.lock().unwrap();
        let len = state.endpoints.len();
        for offset in 0..len {
            let idx = (state.cursor + offset) % len;
            let endpoint = &mut state.endpoints[idx];
            let eligible = if endpoint.healthy() {
                true
            } else if endpoint.probe_due(now) {
                endpoint.probe_in_flight = true;
                true
            } else {
                false
            };
            if eligible {
                let config = endpoint.config.clone();
                state.cursor = (idx + 1) % len;
                return Ok((idx, config));
            }
        }
        Err(LlmError::PoolExhausted)
    }

    fn record_success(&self, idx: usize) {
        let mut state = self.state.lock().unwrap();
        let endpoint = &mut state.endpoints[idx];
        endpoint.consecutive_failures = 0;
        endpoint.probe_in_flight = false;
        endpoint.next_probe_at = None;
    }

    fn record_failure(&self, idx: usize, now: Instant) {
        let mut state = self.state.lock().unwrap();
        let endpoint = &mut state.endpoints[idx];
        endpoint.consecutive_failures = endpoint.consecutive_failures.saturating_add(1);
        endpoint.probe_in_flight = false;
        if !endpoint.healthy() {
            endpoint.next_probe_at = Some(now + self.probe_interval);
        }
    }

    async fn post(
        &self,
        endpoint: &EndpointConfig,
        prompt: &str,
        timeout: Duration,
    ) -> Result<String, String> {
        let response = self
            .client
            .post(endpoint.url())
            .timeout(timeout)
            .json(&self.wire.request_body(prompt))
            .send()
            .await
            .map_err(|e| e.to_string())?;
        let status = response.status();
        if !status.is_success() {
            return Err(format!("http status {status}"));
        }
        let body: Value = response.json().await.map_err(|e| e.to_string())?;
        body.get(&self.wire.content_field)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| format!("reply lacks string field {:?}", self.wire.content_field))
    }

    async fn attempt(&self, prompt: &str, timeout: Duration) -> Result<String, String> {
        let (idx, endpoint) = self.next_instance().map_err(|e| e.to_string())?;
        debug!(url = %endpoint.url(), "llm request");
        match self.post(&endpoint, prompt, timeout).await {
            Ok(reply) => {
                self.record_success(idx);
                Ok(reply)
            }
            Err(err) => {
                warn!(url = %endpoint.url(), %err, "llm request failed");
                self.record_failure(idx, Instant::now());
                Err(err)
            }
        }
    }
}

impl Completer for LlmPool {
    /// One request plus at most one retry on the next endpoint in turn.
    async fn complete(&self, prompt: &str, timeout: Duration) -> Result<String, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        match self.attempt(prompt, timeout).await {
            Ok(reply) => Ok(reply),
            Err(_) => self
                .attempt(prompt, timeout)
                .await
                .map_err(LlmError::Unavailable),
        }
    }
}
