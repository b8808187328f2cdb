//! OpenAI-compatible `/chat/completions` client.

use std::collections::BTreeMap;
use std::time::Duration;

use serde_json::{json, Map, Value};

use super::backend::{BackendError, CompletionBackend};
use super::{ChatMessage, CompletionRequest, CompletionResponse, Role, ToolSchema};
use crate::message::ToolCall;

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub api_base: String,
    pub api_key: String,
    pub timeout: Duration,
}

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("api_base", &self.config.api_base)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        if config.api_base.trim().is_empty() {
            return Err(BackendError::Config("api_base is empty".into()));
        }
        if config.api_key.is_empty() {
            return Err(BackendError::Config("api_key is empty".into()));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        Ok(Self { config, agent })
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.config.api_base.trim_end_matches('/'))
    }
}

/// The JSON body sent for `request`.
pub fn request_body(request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .enumerate()
        .map(|(i, m)| message_json(i, m, &request.messages))
        .collect();
    let mut body = json!({
        "model": request.model,
        "messages": messages,
    });
    if !request.tools.is_empty() {
        body["tools"] = Value::Array(request.tools.iter().map(tool_json).collect());
    }
    body
}

fn call_id(index: usize) -> String {
    format!("call_{index}")
}

fn message_json(index: usize, m: &ChatMessage, all: &[ChatMessage]) -> Value {
    match (&m.role, &m.tool_call) {
        (Role::Assistant, Some(call)) => json!({
            "role": "assistant",
            "content": Value::Null,
            "tool_calls": [{
                "id": call_id(index),
                "type": "function",
                "function": {
                    "name": call.tool_name,
                    "arguments": serde_json::to_string(&call.arguments).expect("map serializes"),
                }
            }]
        }),
        (Role::Tool, _) => {
            // Pair with the closest preceding assistant call.
            let id = all[..index]
                .iter()
                .rposition(|p| p.role == Role::Assistant && p.tool_call.is_some())
                .map(call_id)
                .unwrap_or_else(|| call_id(index));
            json!({"role": "tool", "tool_call_id": id, "content": m.content})
        }
        (role, _) => json!({"role": role.as_str(), "content": m.content}),
    }
}

fn tool_json(tool: &ToolSchema) -> Value {
    let mut properties = Map::new();
    let mut required = Vec::new();
    for p in &tool.parameters {
        properties.insert(
            p.name.clone(),
            json!({"type": "string", "description": p.description}),
        );
        if p.required {
            required.push(Value::String(p.name.clone()));
        }
    }
    json!({
        "type": "function",
        "function": {
            "name": tool.name,
            "description": tool.description,
            "parameters": {"type": "object", "properties": properties, "required": required},
        }
    })
}

/// Extracts the first choice's message from a chat-completions response body.
pub fn parse_response(body: &Value) -> Result<CompletionResponse, BackendError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| BackendError::Malformed("no choices[0].message".into()))?;
    if let Some(call) = message.pointer("/tool_calls/0/function") {
        let name = call
            .get("name")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Malformed("tool call without name".into()))?;
        let raw_args = call.get("arguments").and_then(Value::as_str).unwrap_or("{}");
        let args: Value = serde_json::from_str(if raw_args.trim().is_empty() { "{}" } else { raw_args })
            .map_err(|e| BackendError::Malformed(format!("tool arguments: {e}")))?;
        let Value::Object(map) = args else {
            return Err(BackendError::Malformed("tool arguments are not an object".into()));
        };
        let arguments: BTreeMap<String, String> = map
            .into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect();
        return Ok(CompletionResponse::ToolCall(ToolCall {
            tool_name: name.to_string(),
            arguments,
        }));
    }
    let content = message.get("content").and_then(Value::as_str).unwrap_or("");
    Ok(CompletionResponse::Text(content.to_string()))
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let body = request_body(request);
        let mut resp = self
            .agent
            .post(&self.endpoint())
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if status >= 400 {
            return Err(BackendError::Status { status, body: text });
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Malformed(e.to_string()))?;
        parse_response(&value)
    }
}
