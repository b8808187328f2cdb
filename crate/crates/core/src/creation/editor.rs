//! Registry-editing tools offered to the editor agents.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde_json::Value;

use crate::engine::{Engine, ParamSchema, ToolSchema};
use crate::forms::parse_workflow_form;
use crate::kernel::{
    orchestrate, run_agent_loop, AgentDefinition, HandoffLimits, LoopLimits, Terminal, ToolRunner,
};
use crate::message::{Context, ToolCall, ToolResult};
use crate::registry::{ItemKind, Registry, RegistryError, ToolDefinition, WorkflowDefinition};
use crate::workflow::{run_workflow, Parallelism, RunLimits, WorkflowEnv};

use super::make_named_orchestrator;

pub const TOOL_EDITOR_TOOLS: [&str; 4] = ["list_tools", "create_tool", "delete_tool", "run_tool"];
pub const AGENT_EDITOR_TOOLS: [&str; 7] = [
    "list_tools",
    "list_agents",
    "read_agent",
    "create_agent",
    "delete_agent",
    "create_orchestrator_agent",
    "run_agent",
];
pub const WORKFLOW_EDITOR_TOOLS: [&str; 7] = [
    "list_tools",
    "list_agents",
    "read_agent",
    "create_agent",
    "list_workflows",
    "create_workflow",
    "run_workflow",
];

/// A registry item written through the editor tools.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Artifact {
    pub kind: ItemKind,
    pub name: String,
}

#[derive(Debug, Default)]
struct Record {
    artifacts: Vec<Artifact>,
    orchestrators: Vec<String>,
}

/// Tool runner over a registry. Only the tools named in `enabled` are visible.
pub struct EditorTools<'a> {
    registry: &'a Registry,
    engine: &'a Engine,
    enabled: &'static [&'static str],
    pending_workflow: Option<String>,
    handoff_limits: HandoffLimits,
    run_limits: RunLimits,
    record: Mutex<Record>,
}

impl<'a> EditorTools<'a> {
    pub fn new(registry: &'a Registry, engine: &'a Engine, enabled: &'static [&'static str]) -> Self {
        Self {
            registry,
            engine,
            enabled,
            pending_workflow: None,
            handoff_limits: HandoffLimits::default(),
            run_limits: RunLimits::default(),
            record: Mutex::default(),
        }
    }

    /// The form `create_workflow` registers when called without one.
    pub fn with_pending_workflow(mut self, xml: impl Into<String>) -> Self {
        self.pending_workflow = Some(xml.into());
        self
    }

    pub fn with_limits(mut self, handoffs: HandoffLimits, runs: RunLimits) -> Self {
        self.handoff_limits = handoffs;
        self.run_limits = runs;
        self
    }

    /// Items written so far, in write order, without repeats.
    pub fn artifacts(&self) -> Vec<Artifact> {
        self.record.lock().expect("editor record").artifacts.clone()
    }

    /// Orchestrators built with `create_orchestrator_agent`.
    pub fn orchestrators(&self) -> Vec<String> {
        self.record.lock().expect("editor record").orchestrators.clone()
    }

    fn note(&self, kind: ItemKind, name: &str) {
        let mut rec = self.record.lock().expect("editor record");
        let a = Artifact {
            kind,
            name: name.to_string(),
        };
        if !rec.artifacts.contains(&a) {
            rec.artifacts.push(a);
        }
    }

    fn forget(&self, kind: ItemKind, name: &str) {
        let mut rec = self.record.lock().expect("editor record");
        rec.artifacts.retain(|a| !(a.kind == kind && a.name == name));
        if kind == ItemKind::Agent {
            rec.orchestrators.retain(|n| n != name);
        }
    }

    fn dispatch(&self, call: &ToolCall) -> Result<String, ToolResult> {
        match call.tool_name.as_str() {
            "list_tools" => self.list(ItemKind::Tool),
            "list_agents" => self.list(ItemKind::Agent),
            "list_workflows" => self.list(ItemKind::Workflow),
            "create_tool" => self.create_tool(call),
            "delete_tool" => self.delete(ItemKind::Tool, required(call, "name")?),
            "delete_agent" => self.delete(ItemKind::Agent, required(call, "name")?),
            "run_tool" => self.run_tool(call),
            "read_agent" => {
                let def = self.registry.get_agent(required(call, "name")?).map_err(reg_err)?;
                Ok(serde_json::to_string_pretty(&def).expect("agents serialize"))
            }
            "create_agent" => self.create_agent(call),
            "create_orchestrator_agent" => self.create_orchestrator(call),
            "run_agent" => self.run_agent(call),
            "create_workflow" => self.create_workflow(call),
            "run_workflow" => self.run_workflow(call),
            other => Err(ToolResult::error("E_UNKNOWN_TOOL", format!("no editor tool {other:?}"))),
        }
    }

    fn list(&self, kind: ItemKind) -> Result<String, ToolResult> {
        let names = self.registry.list(kind).map_err(reg_err)?;
        if names.is_empty() {
            return Ok(format!("no {kind}s registered"));
        }
        let mut lines = Vec::with_capacity(names.len());
        for name in names {
            let desc = match kind {
                ItemKind::Tool => self.registry.get_tool(&name).map(|t| t.description).unwrap_or_default(),
                ItemKind::Agent => self.registry.get_agent(&name).map(|a| a.description).unwrap_or_default(),
                ItemKind::Workflow => String::new(),
            };
            lines.push(if desc.is_empty() {
                name
            } else {
                format!("{name}: {}", desc.split_whitespace().collect::<Vec<_>>().join(" "))
            });
        }
        Ok(lines.join("\n"))
    }

    fn delete(&self, kind: ItemKind, name: &str) -> Result<String, ToolResult> {
        self.registry.delete(kind, name).map_err(reg_err)?;
        self.forget(kind, name);
        Ok(format!("deleted {kind} {name:?}"))
    }

    fn create_tool(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let name = required(call, "name")?;
        let description = call.get("description").unwrap_or_default().trim();
        let def = if let Some(primitive) = call.get("primitive").map(str::trim) {
            let mut def = ToolDefinition::builtin(name, primitive).ok_or_else(|| {
                ToolResult::error("E_ARGS", format!("unknown primitive {primitive:?}"))
            })?;
            if !description.is_empty() {
                def.description = description.to_string();
                def.schema.description = description.to_string();
            }
            def
        } else {
            let runner = required(call, "runner")?;
            let source = required(call, "source")?;
            let params = match call.get("parameters") {
                Some(p) if !p.trim().is_empty() => parse_params(p)?,
                _ => Vec::new(),
            };
            ToolDefinition::script(name, description, params, runner, source)
        };
        let version = self.registry.put_tool(&def).map_err(reg_err)?;
        self.note(ItemKind::Tool, name);
        Ok(format!("tool {name:?} saved (version {version})"))
    }

    fn run_tool(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let name = required(call, "name")?;
        let args = match call.get("args") {
            Some(a) if !a.trim().is_empty() => parse_args(a)?,
            _ => BTreeMap::new(),
        };
        let result = self.registry.run_tool(name, &args).map_err(reg_err)?;
        if result.is_ok() {
            Ok(result.payload)
        } else {
            Err(result)
        }
    }

    fn create_agent(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let name = required(call, "name")?;
        let tools = split_list(call.get("tools").unwrap_or_default());
        let missing: Vec<&str> = tools
            .iter()
            .filter(|t| !self.registry.contains(ItemKind::Tool, t))
            .map(String::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(ToolResult::error(
                "E_UNKNOWN_TOOL",
                format!("these tools are not registered: {}", missing.join(", ")),
            ));
        }
        let mut def = AgentDefinition::new(name, call.get("instructions").unwrap_or_default())
            .with_description(call.get("description").unwrap_or_default())
            .with_tools(tools);
        if let Some(model) = call.get("model") {
            def = def.with_model(model.trim());
        }
        let version = self.registry.put_agent(&def).map_err(reg_err)?;
        self.note(ItemKind::Agent, name);
        Ok(format!("agent {name:?} saved (version {version})"))
    }

    fn create_orchestrator(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let names = split_list(required(call, "sub_agents")?);
        let scenario = call.get("scenario").unwrap_or_default();
        let orch_name = call
            .get("name")
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .unwrap_or(super::DEFAULT_ORCHESTRATOR_NAME);
        let subs = names
            .iter()
            .map(|n| self.registry.get_agent(n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(reg_err)?;
        let built = make_named_orchestrator(orch_name, &subs, scenario)
            .map_err(|e| ToolResult::error(e.code(), e.to_string()))?;
        for w in &built.workers {
            self.registry.put_agent(w).map_err(reg_err)?;
            self.note(ItemKind::Agent, &w.name);
        }
        self.registry.put_agent(&built.orchestrator).map_err(reg_err)?;
        self.note(ItemKind::Agent, orch_name);
        self.record
            .lock()
            .expect("editor record")
            .orchestrators
            .push(orch_name.to_string());
        Ok(format!(
            "orchestrator {orch_name:?} saved with tools {}",
            built.orchestrator.tool_names.join(", ")
        ))
    }

    fn run_agent(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let name = required(call, "name")?;
        let task = required(call, "task")?;
        let agent = self.registry.get_agent(name).map_err(reg_err)?;
        match run_entry_agent(self.registry, self.engine, &agent, task, self.handoff_limits) {
            Ok(text) => Ok(text),
            Err((code, msg)) => Err(ToolResult::error(code, msg)),
        }
    }

    fn create_workflow(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let xml = match call.get("form").filter(|f| !f.trim().is_empty()) {
            Some(f) => f.to_string(),
            None => self.pending_workflow.clone().ok_or_else(|| {
                ToolResult::error("E_ARGS", "no form given and no pending form to register")
            })?,
        };
        let form = parse_workflow_form(&xml).map_err(|e| ToolResult::error(e.code(), e.to_string()))?;
        let def = WorkflowDefinition::from_form(&form);
        self.registry.put_workflow(&def).map_err(reg_err)?;
        self.note(ItemKind::Workflow, &def.name);
        Ok(format!("workflow {:?} saved", def.name))
    }

    fn run_workflow(&self, call: &ToolCall) -> Result<String, ToolResult> {
        let name = required(call, "name")?;
        let input = call.get("input").unwrap_or_default();
        let form = self
            .registry
            .get_workflow(name)
            .and_then(|w| w.parse())
            .map_err(reg_err)?;
        let env = WorkflowEnv {
            engine: self.engine,
            tools: self.registry,
            agents: self.registry,
        };
        let run = run_workflow(&form, input, &env, self.run_limits, Parallelism::Serial)
            .map_err(|e| ToolResult::error(e.code(), e.to_string()))?;
        match run.terminal.value() {
            Some(v) => Ok(v.to_string()),
            None => Err(ToolResult::error(
                run.terminal.code().unwrap_or("E_ABORTED").to_string(),
                run.terminal.to_string(),
            )),
        }
    }
}

impl ToolRunner for EditorTools<'_> {
    fn schema(&self, name: &str) -> Option<ToolSchema> {
        if !self.enabled.contains(&name) {
            return None;
        }
        editor_schema(name)
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        if !self.enabled.contains(&call.tool_name.as_str()) {
            return ToolResult::error("E_UNKNOWN_TOOL", format!("no editor tool {:?}", call.tool_name));
        }
        match self.dispatch(call) {
            Ok(payload) => ToolResult::ok(payload),
            Err(err) => err,
        }
    }
}

/// Runs a registered agent on `task`. An agent with transfer targets is treated as an
/// orchestrator and its targets are loaded as workers.
pub fn run_entry_agent(
    registry: &Registry,
    engine: &Engine,
    agent: &AgentDefinition,
    task: &str,
    limits: HandoffLimits,
) -> Result<String, (&'static str, String)> {
    let outcome = if agent.transfer_targets.is_empty() {
        run_agent_loop(
            agent,
            task,
            Context::new(),
            engine,
            registry,
            LoopLimits {
                max_turns: limits.max_turns,
            },
        )
    } else {
        let workers = agent
            .transfer_targets
            .iter()
            .map(|n| registry.get_agent(n))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| (e.code(), e.to_string()))?;
        orchestrate(agent, &workers, task, engine, registry, limits)
    }
    .map_err(|e| (e.code(), e.to_string()))?;
    match outcome.terminal {
        Terminal::Completed { text } => Ok(text),
        Terminal::Transferred { target, .. } => Err(("E_NOT_COMPLETED", format!("ended by transferring to {target}"))),
        Terminal::TurnLimit => Err(("E_TURN_LIMIT", "ran out of turns without a final answer".into())),
        Terminal::Aborted { reason } => Err(("E_ABORTED", reason)),
    }
}

fn editor_schema(name: &str) -> Option<ToolSchema> {
    let p = ParamSchema::required;
    let o = ParamSchema::optional;
    Some(match name {
        "list_tools" => ToolSchema::new(name, "List registered tools with their descriptions."),
        "list_agents" => ToolSchema::new(name, "List registered agents with their descriptions."),
        "list_workflows" => ToolSchema::new(name, "List registered workflows."),
        "create_tool" => ToolSchema::new(name, "Register a tool, replacing any tool of the same name.")
            .param(p("name", "Tool name, an identifier."))
            .param(o("description", "What the tool does."))
            .param(o("primitive", "Builtin primitive to wrap: echo, read_text_file, write_text_file, list_directory or arithmetic_eval."))
            .param(o("runner", "Script runner id, when not wrapping a primitive."))
            .param(o("source", "Script source, when not wrapping a primitive."))
            .param(o("parameters", "JSON list of parameters, each a name or {\"name\", \"description\", \"required\"}.")),
        "delete_tool" => ToolSchema::new(name, "Remove a registered tool.").param(p("name", "Tool name.")),
        "run_tool" => ToolSchema::new(name, "Run a registered tool.")
            .param(p("name", "Tool name."))
            .param(o("args", "JSON object of argument values.")),
        "read_agent" => ToolSchema::new(name, "Show a registered agent's full definition.").param(p("name", "Agent name.")),
        "create_agent" => ToolSchema::new(name, "Register an agent, replacing any agent of the same name.")
            .param(p("name", "Agent name."))
            .param(o("description", "Short description."))
            .param(p("instructions", "The agent's instructions."))
            .param(o("tools", "Comma-separated names of registered tools."))
            .param(o("model", "Model id; the engine default when omitted.")),
        "delete_agent" => ToolSchema::new(name, "Remove a registered agent.").param(p("name", "Agent name.")),
        "create_orchestrator_agent" => ToolSchema::new(
            name,
            "Register an orchestrator that delegates to the given agents, and let each of them hand back to it.",
        )
        .param(p("sub_agents", "Comma-separated names of at least two registered agents."))
        .param(o("scenario", "The situation the orchestrator works in."))
        .param(o("name", "Orchestrator name; defaults to Orchestrator Agent.")),
        "run_agent" => ToolSchema::new(name, "Run a registered agent on a task and return its answer.")
            .param(p("name", "Agent name."))
            .param(p("task", "The task.")),
        "create_workflow" => ToolSchema::new(name, "Register a workflow form.")
            .param(o("form", "Workflow XML; the pending validated form when omitted.")),
        "run_workflow" => ToolSchema::new(name, "Run a registered workflow and return its output value.")
            .param(p("name", "Workflow name."))
            .param(o("input", "Value for the workflow's system input.")),
        _ => return None,
    })
}

fn required<'c>(call: &'c ToolCall, key: &str) -> Result<&'c str, ToolResult> {
    call.get(key)
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .ok_or_else(|| ToolResult::error("E_ARGS", format!("missing required argument {key:?}")))
}

fn reg_err(e: RegistryError) -> ToolResult {
    ToolResult::error(e.code(), e.to_string())
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses a JSON object into string arguments; non-string values keep their JSON text.
pub(crate) fn json_args(v: Value) -> Option<BTreeMap<String, String>> {
    let Value::Object(map) = v else { return None };
    Some(
        map.into_iter()
            .map(|(k, v)| {
                let s = match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                };
                (k, s)
            })
            .collect(),
    )
}

fn parse_args(text: &str) -> Result<BTreeMap<String, String>, ToolResult> {
    serde_json::from_str(text)
        .ok()
        .and_then(json_args)
        .ok_or_else(|| ToolResult::error("E_ARGS", "args must be a JSON object"))
}

fn parse_params(text: &str) -> Result<Vec<ParamSchema>, ToolResult> {
    let bad = || ToolResult::error("E_ARGS", "parameters must be a JSON list of names or objects with a name");
    let Ok(Value::Array(items)) = serde_json::from_str::<Value>(text) else {
        return Err(bad());
    };
    items
        .into_iter()
        .map(|item| match item {
            Value::String(name) => Ok(ParamSchema::required(name, "")),
            Value::Object(obj) => {
                let name = obj.get("name").and_then(Value::as_str).ok_or_else(bad)?;
                let desc = obj.get("description").and_then(Value::as_str).unwrap_or_default();
                Ok(if obj.get("required").and_then(Value::as_bool).unwrap_or(true) {
                    ParamSchema::required(name, desc)
                } else {
                    ParamSchema::optional(name, desc)
                })
            }
            _ => Err(bad()),
        })
        .collect()
}
