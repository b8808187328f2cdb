//! Single-agent tool-use loop and handoff-based control transfer.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{Action, ActionRequest, Engine, EngineError, ParamSchema, ToolSchema};
use crate::forms::globals::{placeholders, substitute_globals, GlobalVar, UnboundPlaceholder};
use crate::message::{snake_case, Context, ParseFailure, ToolCall, ToolResult, Turn};

pub const DEFAULT_MAX_TURNS: usize = 10;
pub const DEFAULT_MAX_HANDOFFS: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDefinition {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// May contain `{key}` placeholders until [`AgentDefinition::with_globals`] resolves them.
    #[serde(default)]
    pub instructions: String,
    #[serde(default)]
    pub tool_names: Vec<String>,
    #[serde(default)]
    pub transfer_targets: Vec<String>,
    #[serde(default)]
    pub model: String,
}

impl AgentDefinition {
    pub fn new(name: impl Into<String>, instructions: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            description: String::new(),
            instructions: instructions.into(),
            tool_names: Vec::new(),
            transfer_targets: Vec::new(),
            model: String::new(),
        }
    }

    pub fn with_tools<I, S>(mut self, tools: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.tool_names.extend(tools.into_iter().map(Into::into));
        self
    }

    pub fn with_transfers<I, S>(mut self, targets: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.transfer_targets.extend(targets.into_iter().map(Into::into));
        self
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = description.into();
        self
    }

    /// Structural invariants: nonempty name, no self transfer, no duplicate entries.
    pub fn check(&self) -> Result<(), String> {
        if self.name.trim().is_empty() {
            return Err("agent name is empty".into());
        }
        if self.transfer_targets.iter().any(|t| t == &self.name) {
            return Err(format!("agent {:?} lists itself as a transfer target", self.name));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.tool_names.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(format!("tool {dup:?} listed twice"));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.transfer_targets.iter().find(|t| !seen.insert(t.as_str())) {
            return Err(format!("transfer target {dup:?} listed twice"));
        }
        Ok(())
    }

    pub fn with_globals(&self, globals: &[GlobalVar]) -> Result<Self, UnboundPlaceholder> {
        Ok(Self {
            instructions: substitute_globals(&self.instructions, globals)?,
            ..self.clone()
        })
    }
}

pub fn transfer_tool_name(target: &str) -> String {
    format!("transfer_to_{}", snake_case(target))
}

pub fn transfer_back_tool_name(target: &str) -> String {
    format!("transfer_back_to_{}", snake_case(target))
}

fn transfer_schema(name: String, target: &str) -> ToolSchema {
    ToolSchema::new(
        name,
        format!("Hand the conversation over to {target}."),
    )
    .param(ParamSchema::optional(
        "task",
        "What the receiving agent should do next, or the result being handed back.",
    ))
}

/// Resolves a transfer call against the agent's targets.
fn transfer_target<'a>(agent: &'a AgentDefinition, tool_name: &str) -> Option<&'a str> {
    let suffix = tool_name
        .strip_prefix("transfer_back_to_")
        .or_else(|| tool_name.strip_prefix("transfer_to_"))?;
    agent
        .transfer_targets
        .iter()
        .find(|t| snake_case(t) == suffix)
        .map(String::as_str)
}

/// Executes the non-transfer tools an agent may call.
pub trait ToolRunner: Send + Sync {
    fn schema(&self, name: &str) -> Option<ToolSchema>;
    fn invoke(&self, call: &ToolCall) -> ToolResult;
}

/// A runner that knows no tools.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTools;

impl ToolRunner for NoTools {
    fn schema(&self, _name: &str) -> Option<ToolSchema> {
        None
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        ToolResult::error("E_UNKNOWN_TOOL", format!("no tool named {:?}", call.tool_name))
    }
}

/// Looks agents up by name.
pub trait AgentLookup {
    fn agent(&self, name: &str) -> Option<AgentDefinition>;
}

impl AgentLookup for [AgentDefinition] {
    fn agent(&self, name: &str) -> Option<AgentDefinition> {
        self.iter().find(|a| a.name == name).cloned()
    }
}

impl AgentLookup for Vec<AgentDefinition> {
    fn agent(&self, name: &str) -> Option<AgentDefinition> {
        self.as_slice().agent(name)
    }
}

impl AgentLookup for HashMap<String, AgentDefinition> {
    fn agent(&self, name: &str) -> Option<AgentDefinition> {
        self.get(name).cloned()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Terminal {
    Completed { text: String },
    Transferred { target: String, payload: String },
    TurnLimit,
    Aborted { reason: String },
}

impl Terminal {
    pub fn is_completed(&self) -> bool {
        matches!(self, Terminal::Completed { .. })
    }

    pub fn completed_text(&self) -> Option<&str> {
        match self {
            Terminal::Completed { text } => Some(text),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgentRunOutcome {
    pub terminal: Terminal,
    pub context: Context,
    /// Transfers applied while producing this outcome (always 0 for a single loop).
    pub handoffs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoopLimits {
    pub max_turns: usize,
}

impl Default for LoopLimits {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HandoffLimits {
    pub max_turns: usize,
    pub max_handoffs: usize,
}

impl Default for HandoffLimits {
    fn default() -> Self {
        Self {
            max_turns: DEFAULT_MAX_TURNS,
            max_handoffs: DEFAULT_MAX_HANDOFFS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("E_UNKNOWN_AGENT: no agent named {0:?}")]
    UnknownAgent(String),
    #[error("E_UNKNOWN_TOOL: agent {agent:?} lists tool {tool:?} that the runner cannot resolve")]
    UnresolvedTool { agent: String, tool: String },
    #[error("E_UNBOUND: agent {agent:?} instructions still contain {{{key}}}")]
    UnresolvedPlaceholder { agent: String, key: String },
    #[error("E_INVALID_AGENT: {0}")]
    InvalidAgent(String),
    #[error("E_NOT_TRANSFERRED: outcome is not a transfer")]
    NotTransferred,
    #[error("E_TOPOLOGY: {0}")]
    Topology(String),
    #[error("E_LIMITS: {0}")]
    Limits(&'static str),
}

impl KernelError {
    pub fn code(&self) -> &'static str {
        match self {
            KernelError::UnknownAgent(_) => "E_UNKNOWN_AGENT",
            KernelError::UnresolvedTool { .. } => "E_UNKNOWN_TOOL",
            KernelError::UnresolvedPlaceholder { .. } => "E_UNBOUND",
            KernelError::InvalidAgent(_) => "E_INVALID_AGENT",
            KernelError::NotTransferred => "E_NOT_TRANSFERRED",
            KernelError::Topology(_) => "E_TOPOLOGY",
            KernelError::Limits(_) => "E_LIMITS",
        }
    }
}

/// The schemas offered to `agent`: its listed tools plus one transfer tool per target.
pub fn agent_tool_schemas(
    agent: &AgentDefinition,
    tools: &dyn ToolRunner,
) -> Result<Vec<ToolSchema>, KernelError> {
    let mut schemas = Vec::with_capacity(agent.tool_names.len() + agent.transfer_targets.len());
    for name in &agent.tool_names {
        if let Some(target) = transfer_target(agent, name) {
            schemas.push(transfer_schema(name.clone(), target));
            continue;
        }
        let schema = tools.schema(name).ok_or_else(|| KernelError::UnresolvedTool {
            agent: agent.name.clone(),
            tool: name.clone(),
        })?;
        schemas.push(schema);
    }
    for target in &agent.transfer_targets {
        let listed = agent
            .tool_names
            .iter()
            .any(|n| transfer_target(agent, n) == Some(target.as_str()));
        if !listed {
            schemas.push(transfer_schema(transfer_tool_name(target), target));
        }
    }
    Ok(schemas)
}

/// Runs `agent` until it answers, transfers, or exhausts `limits.max_turns` engine steps.
///
/// The task, when nonempty, is appended as a user turn; each engine step then appends
/// exactly one agent turn.
pub fn run_agent_loop(
    agent: &AgentDefinition,
    task: &str,
    mut context: Context,
    engine: &Engine,
    tools: &dyn ToolRunner,
    limits: LoopLimits,
) -> Result<AgentRunOutcome, KernelError> {
    if limits.max_turns == 0 {
        return Err(KernelError::Limits("max_turns must be positive"));
    }
    agent.check().map_err(KernelError::InvalidAgent)?;
    if let Some(key) = placeholders(&agent.instructions).into_iter().next() {
        return Err(KernelError::UnresolvedPlaceholder {
            agent: agent.name.clone(),
            key,
        });
    }
    let schemas = agent_tool_schemas(agent, tools)?;

    if !task.is_empty() {
        context.push(Turn::user(task));
    }
    for _ in 0..limits.max_turns {
        let action = engine.next_action(&ActionRequest {
            system: &agent.instructions,
            context: &context,
            tools: &schemas,
            model: &agent.model,
            agent: Some(&agent.name),
        });
        match action {
            Ok(Action::Final(text)) => {
                context.push(Turn::agent(&agent.name, text.clone()));
                return Ok(AgentRunOutcome {
                    terminal: Terminal::Completed { text },
                    context,
                    handoffs: 0,
                });
            }
            Ok(Action::Call { call, raw, .. }) => {
                if let Some(target) = transfer_target(agent, &call.tool_name) {
                    let payload = call.get("task").unwrap_or_default().to_string();
                    let observation = ToolResult::ok(format!("Transferred to {target}."));
                    context.push(Turn::agent_call(&agent.name, raw, call, observation));
                    return Ok(AgentRunOutcome {
                        terminal: Terminal::Transferred {
                            target: target.to_string(),
                            payload,
                        },
                        context,
                        handoffs: 0,
                    });
                }
                let observation = if agent.tool_names.iter().any(|n| n == &call.tool_name) {
                    tools.invoke(&call)
                } else {
                    ToolResult::error(
                        "E_UNKNOWN_TOOL",
                        format!(
                            "tool {:?} is not available to {}; available: {}",
                            call.tool_name,
                            agent.name,
                            schemas.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
                        ),
                    )
                };
                context.push(Turn::agent_call(&agent.name, raw, call, observation));
            }
            Err(EngineError::Parse { error, raw }) => {
                let mut turn = Turn::agent(&agent.name, raw);
                turn.parse_error = Some(ParseFailure {
                    offset: error.offset,
                    reason: format!("{}: {}", error.kind.as_str(), error.detail),
                });
                context.push(turn);
            }
            Err(EngineError::Backend(e)) => {
                return Ok(AgentRunOutcome {
                    terminal: Terminal::Aborted {
                        reason: e.to_string(),
                    },
                    context,
                    handoffs: 0,
                });
            }
        }
    }
    Ok(AgentRunOutcome {
        terminal: Terminal::TurnLimit,
        context,
        handoffs: 0,
    })
}

/// Resolves a transfer: returns the target agent and the context with a system note appended.
pub fn apply_transfer(
    outcome: &AgentRunOutcome,
    agents: &dyn AgentLookup,
    context: Context,
) -> Result<(AgentDefinition, Context), KernelError> {
    let Terminal::Transferred { target, .. } = &outcome.terminal else {
        return Err(KernelError::NotTransferred);
    };
    let next = agents
        .agent(target)
        .ok_or_else(|| KernelError::UnknownAgent(target.clone()))?;
    let from = outcome
        .context
        .turns()
        .iter()
        .rev()
        .find_map(|t| match &t.author {
            crate::message::Author::Agent(n) => Some(n.as_str()),
            _ => None,
        })
        .unwrap_or("unknown");
    let mut context = context;
    context.push(Turn::system(format!(
        "Control transferred from {from} to {}.",
        next.name
    )));
    Ok((next, context))
}

/// Alternates agent loops and transfers, starting from `orchestrator`, over one shared context.
pub fn orchestrate(
    orchestrator: &AgentDefinition,
    workers: &[AgentDefinition],
    task: &str,
    engine: &Engine,
    tools: &dyn ToolRunner,
    limits: HandoffLimits,
) -> Result<AgentRunOutcome, KernelError> {
    if limits.max_handoffs == 0 {
        return Err(KernelError::Limits("max_handoffs must be positive"));
    }
    for w in workers {
        if !orchestrator.transfer_targets.contains(&w.name) {
            return Err(KernelError::Topology(format!(
                "{} is not a transfer target of {}",
                w.name, orchestrator.name
            )));
        }
        if !w.transfer_targets.contains(&orchestrator.name) {
            return Err(KernelError::Topology(format!(
                "{} cannot transfer back to {}",
                w.name, orchestrator.name
            )));
        }
    }
    let mut roster: Vec<AgentDefinition> = Vec::with_capacity(workers.len() + 1);
    roster.push(orchestrator.clone());
    roster.extend(workers.iter().cloned());

    let mut current = orchestrator.clone();
    let mut context = Context::new();
    let mut pending_task = task.to_string();
    let mut handoffs = 0;
    loop {
        let outcome = run_agent_loop(
            &current,
            &pending_task,
            context,
            engine,
            tools,
            LoopLimits {
                max_turns: limits.max_turns,
            },
        )?;
        pending_task.clear();
        match outcome.terminal {
            Terminal::Transferred { .. } => {
                if handoffs >= limits.max_handoffs {
                    return Ok(AgentRunOutcome {
                        terminal: Terminal::TurnLimit,
                        context: outcome.context,
                        handoffs,
                    });
                }
                let (next, ctx) = apply_transfer(&outcome, &roster, outcome.context.clone())?;
                handoffs += 1;
                current = next;
                context = ctx;
            }
            terminal => {
                return Ok(AgentRunOutcome {
                    terminal,
                    context: outcome.context,
                    handoffs,
                })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{EngineMode, RetryPolicy, ScriptedBackend, Step};
    use crate::message::Author;
    use std::sync::Arc;

    fn engine(backend: ScriptedBackend) -> Engine {
        Engine::new(EngineMode::Transformed, Arc::new(backend)).with_retry(RetryPolicy::immediate(1))
    }

    struct Echo;

    impl ToolRunner for Echo {
        fn schema(&self, name: &str) -> Option<ToolSchema> {
            (name == "echo").then(|| ToolSchema::new("echo", "echo").param(ParamSchema::required("text", "")))
        }

        fn invoke(&self, call: &ToolCall) -> ToolResult {
            ToolResult::ok(call.get("text").unwrap_or_default())
        }
    }

    fn call(name: &str) -> Step {
        Step::text(format!("<function={name}><parameter=text>x</parameter></function>"))
    }

    #[test]
    fn completes_on_first_step() {
        let a = AgentDefinition::new("A", "be brief");
        let out = run_agent_loop(
            &a,
            "",
            Context::new(),
            &engine(ScriptedBackend::from_steps([Step::text("done")])),
            &NoTools,
            LoopLimits::default(),
        )
        .unwrap();
        assert_eq!(out.terminal, Terminal::Completed { text: "done".into() });
        assert_eq!(out.context.turns().iter().filter(|t| t.is_agent()).count(), 1);
    }

    #[test]
    fn transfer_call_terminates_loop() {
        let a = AgentDefinition::new("System Orchestrate Agent", "").with_transfers(["Web Agent"]);
        let e = engine(ScriptedBackend::from_steps([Step::text(
            "<function=transfer_to_web_agent><parameter=task>search gaia</parameter></function>",
        )]));
        let out = run_agent_loop(&a, "go", Context::new(), &e, &NoTools, LoopLimits::default()).unwrap();
        assert_eq!(
            out.terminal,
            Terminal::Transferred {
                target: "Web Agent".into(),
                payload: "search gaia".into()
            }
        );
    }

    #[test]
    fn turn_limit_when_never_final() {
        let a = AgentDefinition::new("A", "").with_tools(["echo"]);
        let e = engine(ScriptedBackend::from_steps((0..10).map(|_| call("echo"))));
        let out = run_agent_loop(&a, "", Context::new(), &e, &Echo, LoopLimits { max_turns: 10 }).unwrap();
        assert_eq!(out.terminal, Terminal::TurnLimit);
        assert_eq!(out.context.len(), 10);
        assert!(out.context.turns().iter().all(|t| t.observation.as_ref().unwrap().is_ok()));
    }

    #[test]
    fn unknown_tool_becomes_error_observation() {
        let a = AgentDefinition::new("A", "").with_tools(["echo"]);
        let e = engine(ScriptedBackend::from_steps([call("rm_rf"), Step::text("sorry")]));
        let out = run_agent_loop(&a, "", Context::new(), &e, &Echo, LoopLimits { max_turns: 3 }).unwrap();
        assert!(out.terminal.is_completed());
        let obs = out.context.turns()[0].observation.as_ref().unwrap();
        assert_eq!(obs.error_kind.as_deref(), Some("E_UNKNOWN_TOOL"));
    }

    #[test]
    fn parse_error_is_fed_back_and_counts() {
        let a = AgentDefinition::new("A", "");
        let e = engine(ScriptedBackend::from_steps([Step::text("<function=f"), Step::text("ok")]));
        let out = run_agent_loop(&a, "", Context::new(), &e, &NoTools, LoopLimits { max_turns: 2 }).unwrap();
        assert!(out.terminal.is_completed());
        assert!(out.context.turns()[0].parse_error.is_some());
    }

    #[test]
    fn backend_failure_aborts() {
        let a = AgentDefinition::new("A", "");
        let e = engine(ScriptedBackend::from_steps([Step::Fail("down".into())]));
        let out = run_agent_loop(&a, "", Context::new(), &e, &NoTools, LoopLimits::default()).unwrap();
        assert!(matches!(out.terminal, Terminal::Aborted { .. }));
    }

    #[test]
    fn preconditions() {
        let e = engine(ScriptedBackend::new());
        let a = AgentDefinition::new("A", "Hi {user_name}");
        assert_eq!(
            run_agent_loop(&a, "", Context::new(), &e, &NoTools, LoopLimits::default())
                .unwrap_err()
                .code(),
            "E_UNBOUND"
        );
        let a = AgentDefinition::new("A", "").with_tools(["ghost"]);
        assert_eq!(
            run_agent_loop(&a, "", Context::new(), &e, &NoTools, LoopLimits::default())
                .unwrap_err()
                .code(),
            "E_UNKNOWN_TOOL"
        );
        let a = AgentDefinition::new("A", "").with_transfers(["A"]);
        assert!(run_agent_loop(&a, "", Context::new(), &e, &NoTools, LoopLimits::default()).is_err());
    }

    #[test]
    fn apply_transfer_lookup() {
        let coding = AgentDefinition::new("Coding Agent", "");
        let out = AgentRunOutcome {
            terminal: Terminal::Transferred {
                target: "Coding Agent".into(),
                payload: String::new(),
            },
            context: Context::new(),
            handoffs: 0,
        };
        let (next, ctx) = apply_transfer(&out, &vec![coding.clone()], Context::new()).unwrap();
        assert_eq!(next, coding);
        assert_eq!(ctx.len(), 1);
        assert_eq!(ctx.turns()[0].author, Author::System);

        let ghost = AgentRunOutcome {
            terminal: Terminal::Transferred {
                target: "Ghost Agent".into(),
                payload: String::new(),
            },
            ..out
        };
        let empty: Vec<AgentDefinition> = vec![];
        assert_eq!(
            apply_transfer(&ghost, &empty, Context::new()).unwrap_err(),
            KernelError::UnknownAgent("Ghost Agent".into())
        );
    }

    #[test]
    fn transfer_back_tool_is_recognized() {
        let w = AgentDefinition::new("Web Agent", "")
            .with_transfers(["Orchestrator"])
            .with_tools([transfer_back_tool_name("Orchestrator")]);
        let schemas = agent_tool_schemas(&w, &NoTools).unwrap();
        assert_eq!(schemas.len(), 1);
        assert_eq!(schemas[0].name, "transfer_back_to_orchestrator");
        let e = engine(ScriptedBackend::from_steps([Step::text(
            "<function=transfer_back_to_orchestrator></function>",
        )]));
        let out = run_agent_loop(&w, "", Context::new(), &e, &NoTools, LoopLimits::default()).unwrap();
        assert!(matches!(out.terminal, Terminal::Transferred { ref target, .. } if target == "Orchestrator"));
    }
}
