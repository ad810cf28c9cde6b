//! Staged validation of gated command text.
//!
//! Text first goes through a string match ("move to" + a known color). Only
//! when that fails is an LLM asked, and an "uncertain" answer is re-asked up
//! to `max_revalidations` times, each time on the next endpoint in turn.

use std::collections::VecDeque;
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::GatedCommandText;
use crate::llm::Completer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Puppeteer,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorTarget {
    Red,
    Blue,
    Orange,
    Yellow,
    Purple,
    Green,
    Black,
}

impl ColorTarget {
    pub const ALL: [ColorTarget; 7] = [
        ColorTarget::Red,
        ColorTarget::Blue,
        ColorTarget::Orange,
        ColorTarget::Yellow,
        ColorTarget::Purple,
        ColorTarget::Green,
        ColorTarget::Black,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ColorTarget::Red => "red",
            ColorTarget::Blue => "blue",
            ColorTarget::Orange => "orange",
            ColorTarget::Yellow => "yellow",
            ColorTarget::Purple => "purple",
            ColorTarget::Green => "green",
            ColorTarget::Black => "black",
        }
    }

    /// Exact lowercase lookup.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Black marks the tutorial area and is not a regular target.
    pub fn tutorial_only(self) -> bool {
        self == ColorTarget::Black
    }
}

impl fmt::Display for ColorTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which validation stage produced a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Quick,
    Llm,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Quick => "quick",
            Stage::Llm => "llm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MoveCommand {
    pub target: ColorTarget,
    pub origin_stage: Stage,
    pub source_text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MoveCommandWire<'a> {
    command: &'a str,
    color: ColorTarget,
}

#[derive(Debug, Error, PartialEq)]
#[error("not a move command: {0}")]
pub struct CommandJsonError(String);

impl MoveCommand {
    pub fn new(target: ColorTarget, origin_stage: Stage, source_text: impl Into<String>) -> Self {
        Self {
            target,
            origin_stage,
            source_text: source_text.into(),
        }
    }

    /// `{"command":"move","color":"<color>"}` with no whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&MoveCommandWire {
            command: "move",
            color: self.target,
        })
        .expect("move command serializes")
    }

    /// Parses the wire JSON. Stage and source text do not travel on the
    /// wire, so the caller supplies them.
    pub fn from_json(
        json: &str,
        origin_stage: Stage,
        source_text: impl Into<String>,
    ) -> Result<Self, CommandJsonError> {
        let wire: MoveCommandWire<'_> =
            serde_json::from_str(json).map_err(|e| CommandJsonError(e.to_string()))?;
        if wire.command != "move" {
            return Err(CommandJsonError(format!("command {:?}", wire.command)));
        }
        Ok(Self::new(wire.color, origin_stage, source_text))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationOutcome {
    Valid(MoveCommand),
    Invalid(String),
    /// Still uncertain after `revalidations` re-submissions.
    Uncertain {
        revalidations: u32,
    },
}

impl ValidationOutcome {
    pub fn label(&self) -> &'static str {
        match self {
            ValidationOutcome::Valid(_) => "valid",
            ValidationOutcome::Invalid(_) => "invalid",
            ValidationOutcome::Uncertain { .. } => "uncertain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainPolicy {
    #[default]
    Discard,
    TreatInvalid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelinePolicy {
    pub max_revalidations: u32,
    pub llm_timeout: Duration,
    pub uncertain_after_exhaustion: UncertainPolicy,
}

impl Default for PipelinePolicy {
    fn default() -> Self {
        Self {
            max_revalidations: 1,
            llm_timeout: Duration::from_millis(3000),
            uncertain_after_exhaustion: UncertainPolicy::Discard,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuickOutcome {
    Valid(MoveCommand),
    NoMatch,
}

/// Accepts `... move to [the] <color> ...` on normalized text.
pub fn quick_validate(text: &str) -> QuickOutcome {
    let Some(pos) = text.find("move to") else {
        return QuickOutcome::NoMatch;
    };
    let mut tokens = text[pos + "move to".len()..].split_whitespace();
    let token = match tokens.next() {
        Some("the") => tokens.next(),
        other => other,
    };
    match token.and_then(ColorTarget::from_name) {
        Some(color) => QuickOutcome::Valid(MoveCommand::new(color, Stage::Quick, text)),
        None => QuickOutcome::NoMatch,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PipelineError {
    #[error("command text is empty")]
    EmptyText,
}

const USER_OPEN: &str = "<<<USER_TEXT\n";
const USER_CLOSE: &str = "\nUSER_TEXT>>>";

/// Fixed validation prompt with the user text as a JSON string literal
/// between `<<<USER_TEXT` and `USER_TEXT>>>`.
pub fn build_llm_prompt(text: &str) -> Result<String, PipelineError> {
    if text.trim().is_empty() {
        return Err(PipelineError::EmptyText);
    }
    let colors: Vec<&str> = ColorTarget::ALL.iter().map(|c| c.name()).collect();
    let quoted = serde_json::to_string(text).expect("string serializes");
    Ok(format!(
        "You check voice commands for a robot arm that can move its end-effector \
         to one of these colored areas: {list}.\n\
         Decide whether the user text below asks the robot to move to one of them.\n\
         Reply with exactly one JSON object and nothing else:\n\
         {{\"command\":\"move\",\"color\":\"<{alts}>\"}} if the text clearly asks for that move,\n\
         {{\"command\":\"none\"}} if it is not a move command,\n\
         {{\"command\":\"uncertain\"}} if you cannot tell.\n\
         The user text is a JSON string:\n\
         {USER_OPEN}{quoted}{USER_CLOSE}\n",
        list = colors.join(", "),
        alts = colors.join("|"),
    ))
}

/// Recovers the user text embedded by [`build_llm_prompt`].
pub fn extract_user_text(prompt: &str) -> Option<String> {
    let start = prompt.find(USER_OPEN)? + USER_OPEN.len();
    let end = start + prompt[start..].find(USER_CLOSE)?;
    serde_json::from_str(&prompt[start..end]).ok()
}

/// Byte span of the first balanced `{...}` in `s` starting at `from`,
/// treating braces inside JSON strings as text.
fn balanced_object(s: &str, from: usize) -> Option<usize> {
    let bytes = s.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(from) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// First syntactically complete JSON object in `reply`, if any.
pub fn first_json_object(reply: &str) -> Option<serde_json::Map<String, serde_json::Value>> {
    let mut search = 0;
    while let Some(rel) = reply[search..].find('{') {
        let start = search + rel;
        if let Some(end) = balanced_object(reply, start) {
            if let Ok(serde_json::Value::Object(map)) = serde_json::from_str(&reply[start..end]) {
                return Some(map);
            }
        }
        search = start + 1;
    }
    None
}

/// Maps a model reply onto a verdict; anything unexpected is uncertain.
pub fn parse_llm_reply(reply: &str, source_text: &str) -> ValidationOutcome {
    let uncertain = ValidationOutcome::Uncertain { revalidations: 0 };
    let Some(obj) = first_json_object(reply) else {
        return uncertain;
    };
    match obj.get("command").and_then(|v| v.as_str()) {
        Some("move") => obj
            .get("color")
            .and_then(|v| v.as_str())
            .and_then(|c| ColorTarget::from_name(&c.to_ascii_lowercase()))
            .map(|color| ValidationOutcome::Valid(MoveCommand::new(color, Stage::Llm, source_text)))
            .unwrap_or(uncertain),
        Some("none") => ValidationOutcome::Invalid("not-a-move-command".to_owned()),
        _ => uncertain,
    }
}

/// One step of the validation chain, kept for the command log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "stage", rename_all = "lowercase")]
pub enum StageRecord {
    Quick {
        matched: bool,
    },
    Llm {
        attempt: u32,
        reply: Option<String>,
        verdict: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub outcome: ValidationOutcome,
    pub trace: Vec<StageRecord>,
    pub llm_calls: u32,
}

impl ValidationReport {
    /// The stage that decided the outcome.
    pub fn final_stage(&self) -> Stage {
        if self.llm_calls == 0 {
            Stage::Quick
        } else {
            Stage::Llm
        }
    }
}

/// Runs quick validation, then LLM validation with bounded re-validation.
pub async fn validate<C: Completer>(
    gated: &GatedCommandText,
    policy: &PipelinePolicy,
    pool: &C,
) -> ValidationReport {
    let text = gated.text.as_str();
    let mut trace = Vec::new();

    if let QuickOutcome::Valid(cmd) = quick_validate(text) {
        trace.push(StageRecord::Quick { matched: true });
        return ValidationReport {
            outcome: ValidationOutcome::Valid(cmd),
            trace,
            llm_calls: 0,
        };
    }
    trace.push(StageRecord::Quick { matched: false });

    let Ok(prompt) = build_llm_prompt(text) else {
        return ValidationReport {
            outcome: ValidationOutcome::Invalid("empty-command".to_owned()),
            trace,
            llm_calls: 0,
        };
    };

    let mut llm_calls = 0;
    for attempt in 0..=policy.max_revalidations {
        llm_calls += 1;
        let reply = match pool.complete(&prompt, policy.llm_timeout).await {
            Ok(reply) => reply,
            Err(err) => {
                trace.push(StageRecord::Llm {
                    attempt,
                    reply: None,
                    verdict: err.to_string(),
                });
                return ValidationReport {
                    outcome: ValidationOutcome::Invalid("llm-unavailable".to_owned()),
                    trace,
                    llm_calls,
                };
            }
        };
        let verdict = parse_llm_reply(&reply, text);
        trace.push(StageRecord::Llm {
            attempt,
            reply: Some(reply),
            verdict: verdict.label().to_owned(),
        });
        match verdict {
            ValidationOutcome::Uncertain { .. } => continue,
            decided => {
                return ValidationReport {
                    outcome: decided,
                    trace,
                    llm_calls,
                }
            }
        }
    }

    let outcome = match policy.uncertain_after_exhaustion {
        UncertainPolicy::Discard => ValidationOutcome::Uncertain {
            revalidations: policy.max_revalidations,
        },
        UncertainPolicy::TreatInvalid => ValidationOutcome::Invalid("uncertain".to_owned()),
    };
    ValidationReport {
        outcome,
        trace,
        llm_calls,
    }
}

/// Bounded FIFO that evicts the oldest entry on overflow.
#[derive(Debug)]
pub struct CommandQueue<T> {
    items: VecDeque<T>,
    capacity: usize,
}

impl<T> CommandQueue<T> {
    pub const DEFAULT_DEPTH: usize = 8;

    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            items: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Returns the evicted item when the queue was full.
    pub fn push(&mut self, item: T) -> Option<T> {
        let evicted = if self.items.len() == self.capacity {
            self.items.pop_front()
        } else {
            None
        };
        self.items.push_back(item);
        evicted
    }

    pub fn pop(&mut self) -> Option<T> {
        self.items.pop_front()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
