//! OpenAI-compatible `chat/completions` client.

use std::time::Duration;

use rand::Rng;
use serde_json::{json, Value};

use super::{Backend, ChatError, ChatMessage, ChatSession, CompletionRequest, Role, ToolCall};

/// Exponential backoff between attempts: `base * factor^(attempt-1)`,
/// optionally scaled by a random factor in `[0.5, 1.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_delay: Duration::from_secs(1), factor: 2.0, jitter: true }
    }
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self.factor.powi(attempt.saturating_sub(1) as i32);
        let scale = if self.jitter { rand::thread_rng().gen_range(0.5..1.5) } else { 1.0 };
        self.base_delay.mul_f64(exp * scale)
    }
}

#[derive(Debug, Clone)]
pub struct WireBackend {
    pub base_url: String,
    /// Name of the environment variable holding the API key, if any.
    pub api_key_env: Option<String>,
    pub retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl WireBackend {
    pub fn new(base_url: &str, api_key_env: Option<String>, timeout: Duration) -> Result<Self, ChatError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ChatError::Transport { attempts: 0, message: e.to_string() })?;
        Ok(WireBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key_env,
            retry: RetryPolicy::default(),
            client,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn api_key(&self) -> Result<Option<String>, ChatError> {
        match &self.api_key_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| ChatError::MissingApiKey(var.clone())),
        }
    }

    fn post(&self, body: &Value) -> Result<Value, ChatError> {
        let key = self.api_key()?;
        let url = format!("{}/chat/completions", self.base_url);
        let mut last = String::new();
        for attempt in 1..=self.retry.max_attempts.max(1) {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            let mut rb = self.client.post(&url).json(body);
            if let Some(k) = &key {
                rb = rb.bearer_auth(k);
            }
            match rb.send() {
                Ok(resp) => {
                    let status = resp.status();
                    let text = resp.text().unwrap_or_default();
                    if status.is_success() {
                        return serde_json::from_str(&text)
                            .map_err(|e| ChatError::Malformed(format!("invalid JSON: {e}")));
                    }
                    let retryable = status.as_u16() == 408 || status.as_u16() == 429 || status.is_server_error();
                    if !retryable {
                        return Err(ChatError::Status { status: status.as_u16(), body: text });
                    }
                    last = format!("HTTP {status}: {text}");
                }
                Err(e) => last = e.to_string(),
            }
            log::debug!("attempt {attempt} to {url} failed: {last}");
        }
        Err(ChatError::Transport { attempts: self.retry.max_attempts.max(1), message: last })
    }
}

fn message_to_wire(m: &ChatMessage) -> Value {
    let mut v = json!({ "role": m.role.as_str() });
    match m.role {
        Role::Assistant if !m.tool_calls.is_empty() => {
            v["content"] = if m.content.is_empty() { Value::Null } else { Value::String(m.content.clone()) };
            let calls: Vec<Value> = m
                .tool_calls
                .iter()
                .map(|c| {
                    let args = match &c.invalid_arguments {
                        Some(raw) => raw.clone(),
                        None => serde_json::to_string(&c.arguments).unwrap_or_default(),
                    };
                    json!({ "id": c.id, "type": "function", "function": { "name": c.name, "arguments": args } })
                })
                .collect();
            v["tool_calls"] = Value::Array(calls);
        }
        _ => v["content"] = Value::String(m.content.clone()),
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = Value::String(id.clone());
    }
    v
}

/// Request body for the wire protocol. Temperature is always 0.
pub fn wire_request_body(req: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": req.model_id,
        "messages": req.messages.iter().map(message_to_wire).collect::<Vec<_>>(),
        "temperature": 0,
    });
    if !req.tools.is_empty() {
        body["tools"] = req
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters_schema(),
                    }
                })
            })
            .collect();
    }
    body
}

fn decode_arguments(raw: &str) -> Result<std::collections::BTreeMap<String, String>, ()> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(Default::default());
    }
    match serde_json::from_str::<Value>(trimmed) {
        Ok(Value::Object(map)) => Ok(map
            .into_iter()
            .map(|(k, v)| match v {
                Value::String(s) => (k, s),
                other => (k, other.to_string()),
            })
            .collect()),
        _ => Err(()),
    }
}

/// Extracts `choices[0].message` as an assistant message. Arguments that do
/// not decode to an object are kept verbatim in `invalid_arguments`.
pub fn parse_wire_response(body: &Value) -> Result<ChatMessage, ChatError> {
    let msg = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ChatError::Malformed("missing choices[0].message".into()))?;
    let content = match msg.get("content") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(ChatError::Malformed(format!("unexpected content {other}"))),
    };
    let mut calls = Vec::new();
    if let Some(list) = msg.get("tool_calls").and_then(Value::as_array) {
        for (i, c) in list.iter().enumerate() {
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| ChatError::Malformed(format!("tool call {i} has no function name")))?;
            let id = c.get("id").and_then(Value::as_str).map(str::to_string).unwrap_or_else(|| format!("call_{i}"));
            let raw = match c.pointer("/function/arguments") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Null) | None => String::new(),
                Some(other) => other.to_string(),
            };
            let mut call = ToolCall { id, name: name.to_string(), arguments: Default::default(), invalid_arguments: None };
            match decode_arguments(&raw) {
                Ok(args) => call.arguments = args,
                Err(()) => call.invalid_arguments = Some(raw),
            }
            calls.push(call);
        }
    }
    let reply = ChatMessage { role: Role::Assistant, content, tool_calls: calls, tool_call_id: None };
    reply.check_shape().map_err(ChatError::Malformed)?;
    Ok(reply)
}

struct WireSession<'a> {
    backend: &'a WireBackend,
}

impl ChatSession for WireSession<'_> {
    fn send(&mut self, req: &CompletionRequest) -> Result<ChatMessage, ChatError> {
        let body = self.backend.post(&wire_request_body(req))?;
        parse_wire_response(&body)
    }
}

impl Backend for WireBackend {
    fn open(&self) -> Box<dyn ChatSession + '_> {
        Box::new(WireSession { backend: self })
    }

    /// Checks the API key is present and the endpoint answers at all.
    fn preflight(&self) -> Result<(), ChatError> {
        let key = self.api_key()?;
        let mut rb = self.client.get(format!("{}/models", self.base_url));
        if let Some(k) = &key {
            rb = rb.bearer_auth(k);
        }
        rb.send().map(|_| ()).map_err(|e| ChatError::Transport { attempts: 1, message: e.to_string() })
    }

    fn describe(&self) -> String {
        format!("wire {}", self.base_url)
    }
}
