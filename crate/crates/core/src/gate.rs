//! Transcript normalization and wakeword gating.
//!
//! A transcript only reaches the command pipeline when its first token is
//! close enough to the configured wakeword. Closeness is a normalized
//! Levenshtein similarity compared against `sensitivity`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Characters that `normalize` turns into word breaks.
const PUNCTUATION: [char; 6] = [',', '.', '!', '?', ';', ':'];

/// One unit of recognized speech.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    pub session_id: String,
    pub text: String,
    /// Monotonic arrival time in milliseconds.
    pub received_at: u64,
}

impl Transcript {
    /// Builds a transcript, rejecting text that is blank after trimming.
    pub fn new(
        session_id: impl Into<String>,
        text: impl Into<String>,
        received_at: u64,
    ) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        Some(Self {
            session_id: session_id.into(),
            text,
            received_at,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WakewordConfig {
    #[serde(default = "default_wakeword", rename = "word")]
    pub wakeword: String,
    #[serde(default = "default_sensitivity")]
    pub sensitivity: f64,
}

fn default_wakeword() -> String {
    "blueberry".to_owned()
}

fn default_sensitivity() -> f64 {
    0.9
}

impl Default for WakewordConfig {
    fn default() -> Self {
        Self {
            wakeword: default_wakeword(),
            sensitivity: default_sensitivity(),
        }
    }
}

impl WakewordConfig {
    pub fn new(wakeword: &str, sensitivity: f64) -> Result<Self, ConfigError> {
        let cfg = Self {
            wakeword: wakeword.to_owned(),
            sensitivity,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.sensitivity) {
            return Err(ConfigError::invalid("wakeword.sensitivity", "out of [0,1]"));
        }
        if self.wakeword.is_empty() || self.wakeword.chars().any(char::is_whitespace) {
            return Err(ConfigError::invalid(
                "wakeword.word",
                "must be a single non-empty token",
            ));
        }
        if self.wakeword != normalize(&self.wakeword) {
            return Err(ConfigError::invalid(
                "wakeword.word",
                "must be lowercase without punctuation",
            ));
        }
        Ok(())
    }
}

/// Command text that followed an accepted wakeword.
#[derive(Debug, Clone, PartialEq)]
pub struct GatedCommandText {
    pub text: String,
    pub wakeword_similarity: f64,
    pub source: Transcript,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GateOutcome {
    Pass(GatedCommandText),
    /// The leading token was missing or too far from the wakeword.
    NoWakeword {
        similarity: f64,
    },
}

/// Lowercases, turns `, . ! ? ; :` into spaces and collapses whitespace.
pub fn normalize(raw: &str) -> String {
    let lowered: String = raw
        .to_lowercase()
        .chars()
        .map(|c| if PUNCTUATION.contains(&c) { ' ' } else { c })
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Edit distance over Unicode scalar values, two-row dynamic program.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitution = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitution.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - lev(token, wakeword) / max(len)`, in `[0, 1]`.
pub fn wakeword_similarity(token: &str, config: &WakewordConfig) -> f64 {
    string_similarity(token, &config.wakeword)
}

pub(crate) fn string_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Checks the first token of the normalized transcript against the wakeword.
pub fn gate(transcript: &Transcript, config: &WakewordConfig) -> GateOutcome {
    let normalized = normalize(&transcript.text);
    let (first, rest) = match normalized.split_once(' ') {
        Some((first, rest)) => (first, rest),
        None => (normalized.as_str(), ""),
    };
    if first.is_empty() {
        return GateOutcome::NoWakeword { similarity: 0.0 };
    }
    let similarity = wakeword_similarity(first, config);
    if similarity >= config.sensitivity {
        GateOutcome::Pass(GatedCommandText {
            text: rest.to_owned(),
            wakeword_similarity: similarity,
            source: transcript.clone(),
        })
    } else {
        GateOutcome::NoWakeword { similarity }
    }
}
