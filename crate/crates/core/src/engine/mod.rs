//! The actionable engine: turns a conversation plus tool schemas into the next action.
//!
//! In [`EngineMode::Direct`] the schemas travel to the backend and its native tool call
//! is relayed. In [`EngineMode::Transformed`] the schemas are rendered into the system
//! message and the reply text is parsed with the XML call grammar in [`grammar`].

pub mod backend;
pub mod cassette;
pub mod grammar;
pub mod http;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::{is_identifier, Author, Context, ToolCall};
pub use backend::{
    backend_complete, BackendError, CompletionBackend, FnBackend, RetryPolicy, RouterBackend,
    ScriptedBackend, Step,
};
pub use grammar::{parse_transformed_call, render_call, render_transformed_schema, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineMode {
    Direct,
    Transformed,
}

impl std::str::FromStr for EngineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "direct" => Ok(EngineMode::Direct),
            "transformed" => Ok(EngineMode::Transformed),
            other => Err(format!("unknown engine mode {other:?} (expected direct|transformed)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub name: String,
    pub description: String,
    pub required: bool,
}

impl ParamSchema {
    pub fn required(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            required: true,
        }
    }

    pub fn optional(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            required: false,
            ..Self::required(name, description)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub parameters: Vec<ParamSchema>,
}

impl ToolSchema {
    pub fn new(name: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            parameters: Vec::new(),
        }
    }

    pub fn param(mut self, p: ParamSchema) -> Self {
        self.parameters.push(p);
        self
    }

    /// Identifier grammar on the tool and unique parameter names.
    pub fn check(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("tool name {:?} is not an identifier", self.name));
        }
        let mut seen = std::collections::HashSet::new();
        for p in &self.parameters {
            if !is_identifier(&p.name) {
                return Err(format!("parameter name {:?} is not an identifier", p.name));
            }
            if !seen.insert(p.name.as_str()) {
                return Err(format!("duplicate parameter {:?}", p.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
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
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
}

impl ChatMessage {
    fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            name: None,
            tool_call: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::new(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::new(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::new(Role::Assistant, content)
    }

    pub fn assistant_call(call: ToolCall) -> Self {
        Self {
            tool_call: Some(call),
            ..Self::new(Role::Assistant, "")
        }
    }

    pub fn tool(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            name: Some(name.into()),
            ..Self::new(Role::Tool, content)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub tools: Vec<ToolSchema>,
    pub mode: EngineMode,
    /// Routing hint for offline backends. Never sent over HTTP and not part of the cassette key.
    #[serde(skip)]
    pub agent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompletionResponse {
    Text(String),
    ToolCall(ToolCall),
}

/// What the agent does next.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// `raw` is the reply text the call was parsed from (rendered text in direct mode).
    Call {
        call: ToolCall,
        raw: String,
        trailing_text: bool,
    },
    Final(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("{error}")]
    Parse { error: ParseError, raw: String },
    #[error("{0}")]
    Backend(backend::RetryExhausted),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Parse { .. } => "E_PARSE",
            EngineError::Backend(e) => e.last.code(),
        }
    }
}

/// Everything needed to ask for one action.
#[derive(Debug, Clone, Copy)]
pub struct ActionRequest<'a> {
    pub system: &'a str,
    pub context: &'a Context,
    pub tools: &'a [ToolSchema],
    pub model: &'a str,
    pub agent: Option<&'a str>,
}

#[derive(Clone)]
pub struct Engine {
    mode: EngineMode,
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    default_model: String,
}

impl fmt::Debug for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Engine")
            .field("mode", &self.mode)
            .field("retry", &self.retry)
            .field("default_model", &self.default_model)
            .finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(mode: EngineMode, backend: Arc<dyn CompletionBackend>) -> Self {
        Self {
            mode,
            backend,
            retry: RetryPolicy::default(),
            default_model: "default".to_string(),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_default_model(mut self, model: impl Into<String>) -> Self {
        self.default_model = model.into();
        self
    }

    pub fn mode(&self) -> EngineMode {
        self.mode
    }

    pub fn default_model(&self) -> &str {
        &self.default_model
    }

    pub fn backend(&self) -> &Arc<dyn CompletionBackend> {
        &self.backend
    }

    /// Builds the backend request for `req` in this engine's mode.
    pub fn build_request(&self, req: &ActionRequest<'_>) -> CompletionRequest {
        let model = if req.model.is_empty() {
            self.default_model.clone()
        } else {
            req.model.to_string()
        };
        let mut system = req.system.to_string();
        let mut tools = Vec::new();
        match self.mode {
            EngineMode::Transformed => {
                if let Ok(schema) = render_transformed_schema(req.tools) {
                    if !system.is_empty() {
                        system.push_str("\n\n");
                    }
                    system.push_str(&schema);
                }
            }
            EngineMode::Direct => tools = req.tools.to_vec(),
        }
        let mut messages = Vec::with_capacity(req.context.len() * 2 + 1);
        if !system.is_empty() {
            messages.push(ChatMessage::system(system));
        }
        render_context(req.context, self.mode, &mut messages);
        CompletionRequest {
            model,
            messages,
            tools,
            mode: self.mode,
            agent: req.agent.map(str::to_string),
        }
    }

    /// Plain completion without tools; returns reply text (a structured call is rendered).
    pub fn complete_text(
        &self,
        system: &str,
        user: &str,
        model: &str,
        agent: Option<&str>,
    ) -> Result<String, EngineError> {
        let mut ctx = Context::new();
        ctx.push(crate::message::Turn::user(user));
        let req = self.build_request(&ActionRequest {
            system,
            context: &ctx,
            tools: &[],
            model,
            agent,
        });
        match backend_complete(&req, self.backend.as_ref(), self.retry).map_err(EngineError::Backend)? {
            CompletionResponse::Text(t) => Ok(t),
            CompletionResponse::ToolCall(c) => Ok(render_call(&c)),
        }
    }

    pub fn next_action(&self, req: &ActionRequest<'_>) -> Result<Action, EngineError> {
        let request = self.build_request(req);
        let response =
            backend_complete(&request, self.backend.as_ref(), self.retry).map_err(EngineError::Backend)?;
        interpret(self.mode, response)
    }
}

/// Maps a backend response to an action under `mode`.
pub fn interpret(mode: EngineMode, response: CompletionResponse) -> Result<Action, EngineError> {
    match response {
        CompletionResponse::ToolCall(call) => {
            let raw = render_call(&call);
            if !is_identifier(&call.tool_name) {
                return Err(EngineError::Parse {
                    error: ParseError {
                        offset: grammar::FUNCTION_OPEN.len(),
                        kind: grammar::ParseErrorKind::MalformedName,
                        detail: format!("invalid function name {:?}", call.tool_name),
                    },
                    raw,
                });
            }
            Ok(Action::Call {
                call,
                raw,
                trailing_text: false,
            })
        }
        CompletionResponse::Text(text) => match mode {
            EngineMode::Direct => Ok(Action::Final(text)),
            EngineMode::Transformed => match grammar::find_call(&text) {
                None => Ok(Action::Final(text)),
                Some(Ok(parsed)) => Ok(Action::Call {
                    call: parsed.call,
                    raw: text,
                    trailing_text: parsed.trailing_text,
                }),
                Some(Err(error)) => Err(EngineError::Parse { error, raw: text }),
            },
        },
    }
}

fn render_context(context: &Context, mode: EngineMode, out: &mut Vec<ChatMessage>) {
    for turn in context.turns() {
        match &turn.author {
            Author::User => out.push(ChatMessage::user(&turn.content)),
            Author::System => out.push(ChatMessage::system(&turn.content)),
            Author::Tool(name) => out.push(ChatMessage::user(format!(
                "Observation from `{name}`:\n{}",
                turn.content
            ))),
            Author::Agent(_) => {
                match (&turn.tool_call, mode) {
                    (Some(call), EngineMode::Direct) => {
                        out.push(ChatMessage::assistant_call(call.clone()));
                        if let Some(obs) = &turn.observation {
                            out.push(ChatMessage::tool(&call.tool_name, obs.to_string()));
                        }
                    }
                    (Some(call), EngineMode::Transformed) => {
                        let text = if turn.content.is_empty() {
                            render_call(call)
                        } else {
                            turn.content.clone()
                        };
                        out.push(ChatMessage::assistant(text));
                        if let Some(obs) = &turn.observation {
                            out.push(ChatMessage::user(format!(
                                "Observation from `{}`:\n{obs}",
                                call.tool_name
                            )));
                        }
                    }
                    (None, _) => {
                        out.push(ChatMessage::assistant(&turn.content));
                        if let Some(err) = &turn.parse_error {
                            out.push(ChatMessage::user(format!(
                                "[E_PARSE] Your tool call could not be parsed at byte {}: {}. \
                                 Write exactly one well-formed call or answer in plain text.",
                                err.offset, err.reason
                            )));
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{ToolResult, Turn};

    fn engine(mode: EngineMode, steps: Vec<Step>) -> Engine {
        Engine::new(mode, Arc::new(ScriptedBackend::from_steps(steps)))
            .with_retry(RetryPolicy::immediate(1))
    }

    fn ctx() -> Context {
        let mut c = Context::new();
        c.push(Turn::user("find gaia"));
        c
    }

    fn ask(engine: &Engine, tools: &[ToolSchema]) -> Result<Action, EngineError> {
        let c = ctx();
        engine.next_action(&ActionRequest {
            system: "you are helpful",
            context: &c,
            tools,
            model: "",
            agent: None,
        })
    }

    #[test]
    fn transformed_call_and_final() {
        let e = engine(
            EngineMode::Transformed,
            vec![
                Step::text("<function=web_search><parameter=query>gaia</parameter></function>"),
                Step::text("The answer is 4."),
            ],
        );
        match ask(&e, &[]).unwrap() {
            Action::Call { call, .. } => assert_eq!(call, ToolCall::new("web_search").arg("query", "gaia")),
            other => panic!("{other:?}"),
        }
        assert_eq!(ask(&e, &[]).unwrap(), Action::Final("The answer is 4.".into()));
    }

    #[test]
    fn direct_passthrough() {
        let call = ToolCall::new("click").arg("bid", "12");
        let e = engine(EngineMode::Direct, vec![Step::Call(call.clone())]);
        match ask(&e, &[ToolSchema::new("click", "")]).unwrap() {
            Action::Call { call: got, .. } => assert_eq!(got, call),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transformed_parse_error_surfaces() {
        let e = engine(EngineMode::Transformed, vec![Step::text("<function=f><parameter=a>1</parameter>")]);
        let err = ask(&e, &[]).unwrap_err();
        assert_eq!(err.code(), "E_PARSE");
    }

    #[test]
    fn transformed_injects_schema_into_system() {
        let e = engine(EngineMode::Transformed, vec![]);
        let c = ctx();
        let tools = [ToolSchema::new("web_search", "search")];
        let req = e.build_request(&ActionRequest {
            system: "sys",
            context: &c,
            tools: &tools,
            model: "m",
            agent: None,
        });
        assert!(req.tools.is_empty());
        assert!(req.messages[0].content.contains("<function=web_search>"));

        let d = engine(EngineMode::Direct, vec![]);
        let req = d.build_request(&ActionRequest {
            system: "sys",
            context: &c,
            tools: &tools,
            model: "m",
            agent: None,
        });
        assert_eq!(req.tools.len(), 1);
        assert_eq!(req.messages[0].content, "sys");
    }

    #[test]
    fn observations_render_per_mode() {
        let mut c = ctx();
        c.push(Turn::agent_call("A", "", ToolCall::new("f"), ToolResult::ok("42")));
        let mut direct = Vec::new();
        render_context(&c, EngineMode::Direct, &mut direct);
        assert_eq!(direct.last().unwrap().role, Role::Tool);
        let mut transformed = Vec::new();
        render_context(&c, EngineMode::Transformed, &mut transformed);
        assert_eq!(transformed[1].content, "<function=f></function>");
        assert!(transformed[2].content.contains("42"));
    }

    #[test]
    fn deterministic_for_fixed_script() {
        let run = || {
            let e = engine(EngineMode::Transformed, vec![Step::text("<function=f><parameter=a>1</parameter></function>")]);
            ask(&e, &[]).unwrap()
        };
        assert_eq!(run(), run());
    }
}
