//! Conversation primitives shared by the engine, kernel and workflow layers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Returns true when `name` matches `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Lowercases `name` and collapses every run of non-alphanumerics into one `_`.
///
/// `"Market Research Agent"` becomes `"market_research_agent"`.
pub fn snake_case(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    let mut pending_sep = false;
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            if pending_sep && !out.is_empty() {
                out.push('_');
            }
            pending_sep = false;
            out.push(c.to_ascii_lowercase());
        } else {
            pending_sep = true;
        }
    }
    out
}

/// One action: a named tool plus its textual arguments.
///
/// Arguments are kept in a `BTreeMap` so key uniqueness holds by construction and
/// serialization is order-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool_name: String,
    pub arguments: BTreeMap<String, String>,
}

impl ToolCall {
    pub fn new(tool_name: impl Into<String>) -> Self {
        Self {
            tool_name: tool_name.into(),
            arguments: BTreeMap::new(),
        }
    }

    pub fn arg(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.arguments.insert(key.into(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.arguments.get(key).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolStatus {
    Ok,
    Error,
}

/// The environment's observation for one executed [`ToolCall`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub status: ToolStatus,
    pub payload: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_kind: Option<String>,
}

impl ToolResult {
    pub fn ok(payload: impl Into<String>) -> Self {
        Self {
            status: ToolStatus::Ok,
            payload: payload.into(),
            error_kind: None,
        }
    }

    pub fn error(kind: impl Into<String>, payload: impl Into<String>) -> Self {
        Self {
            status: ToolStatus::Error,
            payload: payload.into(),
            error_kind: Some(kind.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ToolStatus::Ok
    }
}

impl fmt::Display for ToolResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.error_kind {
            Some(kind) => write!(f, "[{kind}] {}", self.payload),
            None => f.write_str(&self.payload),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "lowercase")]
pub enum Author {
    User,
    System,
    Agent(String),
    Tool(String),
}

/// Grammar failure recorded on a turn whose text opened a call but did not parse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub offset: usize,
    pub reason: String,
}

/// One step of a conversation.
///
/// `observation` is set exactly when `tool_call` is set and the call was executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub author: Author,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ToolResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parse_error: Option<ParseFailure>,
}

impl Turn {
    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Author::User, content)
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Author::System, content)
    }

    pub fn agent(name: impl Into<String>, content: impl Into<String>) -> Self {
        Self::plain(Author::Agent(name.into()), content)
    }

    pub fn agent_call(
        name: impl Into<String>,
        content: impl Into<String>,
        call: ToolCall,
        observation: ToolResult,
    ) -> Self {
        Self {
            author: Author::Agent(name.into()),
            content: content.into(),
            tool_call: Some(call),
            observation: Some(observation),
            parse_error: None,
        }
    }

    fn plain(author: Author, content: impl Into<String>) -> Self {
        Self {
            author,
            content: content.into(),
            tool_call: None,
            observation: None,
            parse_error: None,
        }
    }

    pub fn is_agent(&self) -> bool {
        matches!(self.author, Author::Agent(_))
    }
}

/// Ordered action/observation history. Append-only.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Context {
    turns: Vec<Turn>,
}

impl Context {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, turn: Turn) {
        self.turns.push(turn);
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    pub fn last(&self) -> Option<&Turn> {
        self.turns.last()
    }

    /// True when `prefix` is a prefix of this context.
    pub fn extends(&self, prefix: &Context) -> bool {
        self.turns.len() >= prefix.turns.len() && self.turns[..prefix.turns.len()] == prefix.turns[..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identifier_grammar() {
        assert!(is_identifier("web_search"));
        assert!(is_identifier("_x9"));
        assert!(!is_identifier("9x"));
        assert!(!is_identifier(""));
        assert!(!is_identifier("a-b"));
        assert!(!is_identifier("Web Agent"));
    }

    #[test]
    fn snake_case_names() {
        assert_eq!(snake_case("Market Research Agent"), "market_research_agent");
        assert_eq!(snake_case("Web Agent"), "web_agent");
        assert_eq!(snake_case("  DaVinci--Agent "), "davinci_agent");
    }

    #[test]
    fn context_prefix() {
        let mut a = Context::new();
        a.push(Turn::user("hi"));
        let mut b = a.clone();
        b.push(Turn::agent("x", "yo"));
        assert!(b.extends(&a));
        assert!(!a.extends(&b));
    }
}
