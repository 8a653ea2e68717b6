//! Provider-agnostic chat completion with structured tool calling.
//!
//! Requests are always sent at temperature 0. User and tool messages are
//! capped at `char_cap` characters (system messages are exempt); longer
//! content is cut and suffixed with [`TRUNCATION_MARKER`].

mod scripted;
mod wire;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use scripted::{read_trajectory, scripted_backend, write_trajectory, ScriptedBackend, TrajectoryLine};
pub use wire::{parse_wire_response, wire_request_body, RetryPolicy, WireBackend};

/// Suffix appended to content cut at the character cap.
pub const TRUNCATION_MARKER: &str = " [MAXIMUM LENGTH]";

/// Default cap on user and tool message length, in characters.
pub const DEFAULT_CHAR_CAP: usize = 2000;

/// Sampling temperature carried by every outbound request.
pub const TEMPERATURE: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub arguments: BTreeMap<String, String>,
    /// Raw argument text that could not be decoded into a name/value map.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_arguments: Option<String>,
}

impl ToolCall {
    pub fn new<I, K, V>(id: impl Into<String>, name: impl Into<String>, args: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: Into<String>,
        V: Into<String>,
    {
        ToolCall {
            id: id.into(),
            name: name.into(),
            arguments: args.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            invalid_arguments: None,
        }
    }

    /// Checks the call against the registered specs and returns the matching one.
    pub fn validate<'a>(&self, specs: &'a [ToolSpec]) -> Result<&'a ToolSpec, String> {
        let spec = specs
            .iter()
            .find(|s| s.name == self.name)
            .ok_or_else(|| format!("unknown tool '{}'", self.name))?;
        if let Some(raw) = &self.invalid_arguments {
            return Err(format!("could not parse arguments for {}: {raw}", self.name));
        }
        for p in spec.parameters.iter().filter(|p| p.required) {
            if !self.arguments.contains_key(&p.name) {
                return Err(format!("missing required argument '{}' for {}", p.name, self.name));
            }
        }
        if let Some(extra) = self.arguments.keys().find(|k| !spec.parameters.iter().any(|p| &p.name == *k)) {
            return Err(format!("unexpected argument '{extra}' for {}", self.name));
        }
        Ok(spec)
    }
}

impl fmt::Display for ToolCall {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let args: Vec<String> = self.arguments.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        write!(f, "{}({})", self.name, args.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    #[serde(default)]
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        ChatMessage { role, content: content.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_tool_calls(calls: Vec<ToolCall>) -> Self {
        ChatMessage { role: Role::Assistant, content: String::new(), tool_calls: calls, tool_call_id: None }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: Some(call_id.into()),
        }
    }

    pub fn has_tool_calls(&self) -> bool {
        !self.tool_calls.is_empty()
    }

    /// Whether the message respects the per-role shape rules.
    pub fn check_shape(&self) -> Result<(), String> {
        match self.role {
            Role::Assistant if self.content.is_empty() && self.tool_calls.is_empty() => {
                Err("assistant message has neither content nor tool calls".into())
            }
            Role::Tool if self.tool_call_id.is_none() => Err("tool message without tool_call_id".into()),
            Role::System | Role::User | Role::Tool if !self.tool_calls.is_empty() => {
                Err(format!("{} message carries tool calls", self.role.as_str()))
            }
            Role::System | Role::User | Role::Assistant if self.tool_call_id.is_some() => {
                Err(format!("{} message carries tool_call_id", self.role.as_str()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolParam {
    pub name: String,
    /// JSON-Schema type name, e.g. `string`.
    #[serde(rename = "type")]
    pub kind: String,
    pub description: String,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Vec<ToolParam>,
}

impl ToolSpec {
    /// The `parameters` object of the wire schema.
    pub fn parameters_schema(&self) -> serde_json::Value {
        let mut props = serde_json::Map::new();
        for p in &self.parameters {
            props.insert(
                p.name.clone(),
                serde_json::json!({ "type": p.kind, "description": p.description }),
            );
        }
        let required: Vec<&str> =
            self.parameters.iter().filter(|p| p.required).map(|p| p.name.as_str()).collect();
        serde_json::json!({ "type": "object", "properties": props, "required": required })
    }
}

/// Result of running one tool call; `text` becomes the tool message content.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolOutput {
    pub text: String,
    pub is_error: bool,
    /// `Some(true)` when served from cache, `Some(false)` on a cache miss.
    pub cache_hit: Option<bool>,
}

impl ToolOutput {
    pub fn error(text: impl Into<String>) -> Self {
        ToolOutput { text: text.into(), is_error: true, cache_hit: None }
    }
}

/// A set of tools the model may call.
pub trait ToolExecutor: Send + Sync {
    fn specs(&self) -> Vec<ToolSpec>;

    /// Runs a call that already validated against [`ToolExecutor::specs`].
    fn execute(&self, call: &ToolCall) -> ToolOutput;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cap {cap} must exceed the marker length {marker_chars}")]
pub struct CapTooSmall {
    pub cap: usize,
    pub marker_chars: usize,
}

/// Cuts `text` to at most `cap` characters. Over-long text keeps its
/// leading `cap - len(marker)` characters followed by `marker`, so the
/// result is exactly `cap` characters long.
pub fn truncate_for_model(text: &str, cap: usize, marker: &str) -> Result<String, CapTooSmall> {
    let marker_chars = marker.chars().count();
    if cap <= marker_chars {
        return Err(CapTooSmall { cap, marker_chars });
    }
    match text.char_indices().nth(cap) {
        None => Ok(text.to_string()),
        Some(_) => {
            let keep = cap - marker_chars;
            let cut = text.char_indices().nth(keep).map(|(i, _)| i).unwrap_or(text.len());
            let mut out = String::with_capacity(cut + marker.len());
            out.push_str(&text[..cut]);
            out.push_str(marker);
            Ok(out)
        }
    }
}

/// Applies the message cap to one message: system and assistant messages pass through.
pub fn cap_message(mut msg: ChatMessage, cap: usize) -> Result<ChatMessage, CapTooSmall> {
    if matches!(msg.role, Role::User | Role::Tool) {
        msg.content = truncate_for_model(&msg.content, cap, TRUNCATION_MARKER)?;
    }
    Ok(msg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub model_id: String,
    pub messages: Vec<ChatMessage>,
    pub tools: Vec<ToolSpec>,
    pub char_cap: usize,
}

impl CompletionRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<ChatMessage>, tools: Vec<ToolSpec>) -> Self {
        CompletionRequest { model_id: model_id.into(), messages, tools, char_cap: DEFAULT_CHAR_CAP }
    }

    pub fn with_char_cap(mut self, cap: usize) -> Self {
        self.char_cap = cap;
        self
    }

    /// Always zero.
    pub fn temperature(&self) -> f64 {
        TEMPERATURE
    }

    /// Truncates every user and tool message to the cap.
    pub fn prepare(mut self) -> Result<Self, ChatError> {
        let cap = self.char_cap;
        self.messages = self
            .messages
            .into_iter()
            .map(|m| cap_message(m, cap))
            .collect::<Result<_, _>>()
            .map_err(|e| ChatError::InvalidRequest(e.to_string()))?;
        Ok(self)
    }

    /// Checks the preconditions of [`complete`].
    pub fn check(&self) -> Result<(), ChatError> {
        let invalid = |m: String| Err(ChatError::InvalidRequest(m));
        match self.messages.first() {
            Some(m) if m.role == Role::System => {}
            _ => return invalid("request must start with a system message".into()),
        }
        if self.messages.iter().filter(|m| m.role == Role::System).count() != 1 {
            return invalid("request must contain exactly one system message".into());
        }
        for (i, m) in self.messages.iter().enumerate() {
            if let Err(e) = m.check_shape() {
                return invalid(format!("message {i}: {e}"));
            }
            if matches!(m.role, Role::User | Role::Tool) && m.content.chars().count() > self.char_cap {
                return invalid(format!("message {i} exceeds {} characters; prepare() first", self.char_cap));
            }
        }
        let mut names = std::collections::HashSet::new();
        if let Some(dup) = self.tools.iter().find(|t| !names.insert(t.name.as_str())) {
            return invalid(format!("duplicate tool '{}'", dup.name));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChatError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed backend reply: {0}")]
    Malformed(String),
    #[error("API key environment variable '{0}' is not set")]
    MissingApiKey(String),
    #[error("script must contain at least one assistant message")]
    EmptyScript,
    #[error("script exhausted after {0} response(s)")]
    ScriptExhausted(usize),
    #[error("no scripted response for request fingerprint {0}")]
    ScriptMiss(String),
    #[error("invalid script: {0}")]
    InvalidScript(String),
}

/// One conversation against a backend. Sessions are cheap and never shared
/// between statement runs.
pub trait ChatSession {
    fn send(&mut self, req: &CompletionRequest) -> Result<ChatMessage, ChatError>;
}

/// A chat-completion provider, shareable across concurrent runs.
pub trait Backend: Send + Sync {
    fn open(&self) -> Box<dyn ChatSession + '_>;

    /// Cheap reachability check run before any statement is consumed.
    fn preflight(&self) -> Result<(), ChatError> {
        Ok(())
    }

    fn describe(&self) -> String;
}

/// Sends a prepared request and returns the assistant reply.
pub fn complete(req: &CompletionRequest, session: &mut dyn ChatSession) -> Result<ChatMessage, ChatError> {
    req.check()?;
    let reply = session.send(req)?;
    if reply.role != Role::Assistant {
        return Err(ChatError::Malformed(format!("expected assistant reply, got {}", reply.role.as_str())));
    }
    reply.check_shape().map_err(ChatError::Malformed)?;
    Ok(reply)
}

/// Exact-content fingerprint of a message sequence: SHA-256 over roles,
/// contents and tool-call names.
pub fn fingerprint(messages: &[ChatMessage]) -> String {
    let mut h = Sha256::new();
    for m in messages {
        for part in std::iter::once(m.role.as_str())
            .chain(std::iter::once(m.content.as_str()))
            .chain(m.tool_calls.iter().map(|c| c.name.as_str()))
        {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        h.update([0xff]);
    }
    format!("{:x}", h.finalize())
}
