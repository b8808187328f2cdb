//! Bounded create-and-check pipelines: a profiling agent writes a form, the runtime
//! validates it, and editor agents turn it into registry items that are then exercised.
//!
//! Every phase gives its agent at most `max_attempts` tries. A failed try is rolled back
//! before the next one, and a phase that runs out of tries rolls the registry back to
//! where it was when the pipeline started.

mod editor;
mod prompts;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::engine::Engine;
use crate::forms::{
    extract_form_text, parse_agent_form, parse_workflow_form, validate_agent_form, validate_workflow_form,
    AgentCategory, AgentForm, Diagnostic, WorkflowForm,
};
use crate::kernel::{
    run_agent_loop, AgentDefinition, HandoffLimits, LoopLimits, NoTools, Terminal, ToolRunner,
    DEFAULT_MAX_TURNS,
};
use crate::message::{Context, Turn};
use crate::registry::{ItemKind, Registry, RegistryError, Snapshot, WorkflowDefinition};
use crate::trace::{Trace, TraceRecord};
use crate::workflow::{run_workflow, Parallelism, RunLimits, WorkflowEnv};

pub use editor::{run_entry_agent, Artifact, EditorTools, AGENT_EDITOR_TOOLS, TOOL_EDITOR_TOOLS, WORKFLOW_EDITOR_TOOLS};
pub use prompts::{
    agent_editor_agent, agent_profiling_agent, tool_editor_agent, workflow_editor_agent, workflow_profiling_agent,
    AGENT_EDITOR_AGENT, AGENT_PROFILING_AGENT, TOOL_EDITOR_AGENT, WORKFLOW_EDITOR_AGENT, WORKFLOW_PROFILING_AGENT,
};

pub const DEFAULT_MAX_ATTEMPTS: u32 = 3;
pub const DEFAULT_ORCHESTRATOR_NAME: &str = "Orchestrator Agent";
/// Turn budget for the system agents; editors usually need several tool calls.
pub const DEFAULT_EDITOR_TURNS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Profiling,
    Tools,
    Agents,
    Workflow,
    Done,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Profiling => "profiling",
            Phase::Tools => "tools",
            Phase::Agents => "agents",
            Phase::Workflow => "workflow",
            Phase::Done => "done",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CreationError {
    #[error("E_EMPTY: {0}")]
    Empty(&'static str),
    #[error("E_TOO_FEW_AGENTS: an orchestrator needs at least 2 sub-agents, got {0}")]
    TooFewAgents(usize),
    #[error("E_INVALID_AGENT: {0}")]
    InvalidAgent(String),
    #[error("E_PHASE_EXHAUSTED: phase {phase} failed {attempts} time(s); last problem: {last_problem}")]
    PhaseExhausted {
        phase: Phase,
        attempts: u32,
        last_problem: String,
    },
    #[error("E_LIMITS: {0}")]
    Limits(&'static str),
    #[error("{0}")]
    Registry(#[from] RegistryError),
    #[error("{code}: {message}")]
    SystemAgent { code: &'static str, message: String },
}

impl CreationError {
    pub fn code(&self) -> &'static str {
        match self {
            CreationError::Empty(_) => "E_EMPTY",
            CreationError::TooFewAgents(_) => "E_TOO_FEW_AGENTS",
            CreationError::InvalidAgent(_) => "E_INVALID_AGENT",
            CreationError::PhaseExhausted { .. } => "E_PHASE_EXHAUSTED",
            CreationError::Limits(_) => "E_LIMITS",
            CreationError::Registry(e) => e.code(),
            CreationError::SystemAgent { code, .. } => code,
        }
    }
}

/// Formats validator output for the profiling agent. Lines follow input order.
pub fn diagnostics_to_feedback(diags: &[Diagnostic]) -> Result<String, CreationError> {
    if diags.is_empty() {
        return Err(CreationError::Empty("no diagnostics to report"));
    }
    let mut out = format!("The form was rejected with {} problem(s):\n", diags.len());
    for (i, d) in diags.iter().enumerate() {
        out.push_str(&format!("{}. [{}] at {}: {}\n", i + 1, d.code, d.location, d.message));
    }
    out.push_str("Fix every problem listed and send the complete form again.");
    Ok(out)
}

/// An orchestrator plus its workers, each updated to hand control back to it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Orchestration {
    pub orchestrator: AgentDefinition,
    pub workers: Vec<AgentDefinition>,
}

pub fn make_orchestrator_agent(sub_agents: &[AgentDefinition], scenario: &str) -> Result<Orchestration, CreationError> {
    make_named_orchestrator(DEFAULT_ORCHESTRATOR_NAME, sub_agents, scenario)
}

pub fn make_named_orchestrator(
    name: &str,
    sub_agents: &[AgentDefinition],
    scenario: &str,
) -> Result<Orchestration, CreationError> {
    if sub_agents.len() < 2 {
        return Err(CreationError::TooFewAgents(sub_agents.len()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for a in sub_agents {
        if a.name == name {
            return Err(CreationError::InvalidAgent(format!(
                "sub-agent {:?} has the orchestrator's own name",
                a.name
            )));
        }
        if !seen.insert(a.name.as_str()) {
            return Err(CreationError::InvalidAgent(format!("sub-agent {:?} is listed twice", a.name)));
        }
    }

    let mut instructions = String::new();
    if !scenario.trim().is_empty() {
        instructions.push_str(&format!("Scenario: {}\n\n", scenario.trim()));
    }
    instructions.push_str(&format!(
        "You are {name}. You do not solve tasks yourself; you coordinate these agents:\n"
    ));
    for a in sub_agents {
        let desc = a.description.split_whitespace().collect::<Vec<_>>().join(" ");
        instructions.push_str(&format!(
            "- {} (call {}): {}\n",
            a.name,
            crate::kernel::transfer_tool_name(&a.name),
            if desc.is_empty() { "no description given" } else { &desc }
        ));
    }
    instructions.push_str(
        "\nBreak the user's request into sub-tasks that each fit one agent. Hand over one \
         sub-task at a time, stating exactly what you need back. When an agent returns, decide \
         whether another sub-task is needed. Once every part is done, answer the user directly \
         with the combined result.",
    );

    let orchestrator = AgentDefinition::new(name, instructions)
        .with_description(format!(
            "Coordinates {} by delegating sub-tasks.",
            sub_agents.iter().map(|a| a.name.as_str()).collect::<Vec<_>>().join(", ")
        ))
        .with_tools(sub_agents.iter().map(|a| crate::kernel::transfer_tool_name(&a.name)))
        .with_transfers(sub_agents.iter().map(|a| a.name.clone()));
    orchestrator.check().map_err(CreationError::InvalidAgent)?;

    let back = crate::kernel::transfer_back_tool_name(name);
    let workers = sub_agents
        .iter()
        .map(|a| {
            let mut w = a.clone();
            if !w.transfer_targets.iter().any(|t| t == name) {
                w.transfer_targets.push(name.to_string());
            }
            if !w.tool_names.contains(&back) {
                w.tool_names.push(back.clone());
            }
            w
        })
        .collect();
    Ok(Orchestration { orchestrator, workers })
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub max_attempts: u32,
    pub engine: Engine,
    pub agent_profiling_agent: AgentDefinition,
    pub tool_editor_agent: AgentDefinition,
    pub agent_editor_agent: AgentDefinition,
    pub workflow_profiling_agent: AgentDefinition,
    pub workflow_editor_agent: AgentDefinition,
    /// Turn budget of each system-agent invocation.
    pub system_limits: LoopLimits,
    /// Bounds for running created agents on the task.
    pub handoff_limits: HandoffLimits,
    /// Bounds for running created workflows on the task.
    pub run_limits: RunLimits,
}

impl PipelineConfig {
    pub fn new(engine: Engine) -> Self {
        Self {
            max_attempts: DEFAULT_MAX_ATTEMPTS,
            engine,
            agent_profiling_agent: agent_profiling_agent(),
            tool_editor_agent: tool_editor_agent(),
            agent_editor_agent: agent_editor_agent(),
            workflow_profiling_agent: workflow_profiling_agent(),
            workflow_editor_agent: workflow_editor_agent(),
            system_limits: LoopLimits {
                max_turns: DEFAULT_EDITOR_TURNS,
            },
            handoff_limits: HandoffLimits::default(),
            run_limits: RunLimits::default(),
        }
    }

    pub fn with_max_attempts(mut self, m: u32) -> Self {
        self.max_attempts = m;
        self
    }

    fn check(&self) -> Result<(), CreationError> {
        if self.max_attempts == 0 {
            return Err(CreationError::Limits("max_attempts must be at least 1"));
        }
        if self.system_limits.max_turns == 0 {
            return Err(CreationError::Limits("system agent turn budget must be positive"));
        }
        Ok(())
    }

    /// Most backend requests one run of a created agent can make.
    fn agent_run_bound(&self) -> usize {
        (self.handoff_limits.max_handoffs + 1) * self.handoff_limits.max_turns
    }

    /// Most backend requests one workflow run can make: every event gets a corrective retry.
    fn workflow_run_bound(&self) -> usize {
        self.run_limits.max_total_events * 2 * DEFAULT_MAX_TURNS
    }

    /// Upper bound on backend requests for a whole pipeline, assuming no transport retries.
    ///
    /// Each editor turn may itself run the created artifact, and the pipeline runs it once
    /// more per attempt when a task is given.
    pub fn backend_call_bound(&self, kind: PipelineKind) -> usize {
        let m = self.max_attempts as usize;
        let t = self.system_limits.max_turns;
        let editor = |run: usize| t * (1 + run) + run;
        match kind {
            PipelineKind::Agent => m * t + m * t + m * editor(self.agent_run_bound()),
            PipelineKind::Workflow => m * t + m * editor(self.workflow_run_bound()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineKind {
    Agent,
    Workflow,
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    /// The phase that failed, or `Done`.
    pub phase_reached: Phase,
    pub success: bool,
    /// Registry items written by successful phases, in write order.
    pub artifacts: Vec<Artifact>,
    pub transcript: Context,
    /// One entry per rejected form.
    pub diagnostics_history: Vec<Vec<Diagnostic>>,
    pub error: Option<CreationError>,
    /// Invocations of each system agent, keyed by agent name.
    pub invocations: BTreeMap<String, u32>,
    /// The created artifact's answer to the task, when one was given.
    pub result: Option<String>,
    pub trace: Trace,
}

impl PipelineOutcome {
    pub fn artifact_names(&self) -> Vec<&str> {
        self.artifacts.iter().map(|a| a.name.as_str()).collect()
    }
}

/// Reason an attempt failed, phrased for the agent that made it.
type Problems = Vec<String>;

struct Session<'a> {
    registry: &'a Registry,
    config: &'a PipelineConfig,
    start: Snapshot,
    transcript: Context,
    trace: Trace,
    history: Vec<Vec<Diagnostic>>,
    invocations: BTreeMap<String, u32>,
    artifacts: Vec<Artifact>,
}

enum Rejection {
    Diagnostics(Vec<Diagnostic>),
    Other(String),
}

impl<'a> Session<'a> {
    fn new(registry: &'a Registry, config: &'a PipelineConfig) -> Result<Self, CreationError> {
        config.check()?;
        Ok(Self {
            registry,
            config,
            start: registry.snapshot()?,
            transcript: Context::new(),
            trace: Trace::new(),
            history: Vec::new(),
            invocations: BTreeMap::new(),
            artifacts: Vec::new(),
        })
    }

    fn log(&mut self, phase: Phase, action: &str, detail: impl Into<String>) {
        self.trace
            .push(TraceRecord::new(phase.as_str()).action(action).detail(detail));
    }

    /// One system-agent invocation on a phase context. Kernel errors here mean the
    /// pipeline itself is misconfigured, so they end the pipeline.
    fn invoke(
        &mut self,
        agent: &AgentDefinition,
        task: &str,
        context: Context,
        tools: &dyn ToolRunner,
    ) -> Result<(Terminal, Context), CreationError> {
        *self.invocations.entry(agent.name.clone()).or_default() += 1;
        let outcome = run_agent_loop(agent, task, context, &self.config.engine, tools, self.config.system_limits)
            .map_err(|e| CreationError::SystemAgent {
                code: e.code(),
                message: e.to_string(),
            })?;
        Ok((outcome.terminal, outcome.context))
    }

    fn close_phase(&mut self, phase: Phase, context: Context) {
        self.transcript.push(Turn::system(format!("phase: {phase}")));
        for t in context.turns() {
            self.transcript.push(t.clone());
        }
    }

    /// Asks `agent` for a form until `accept` takes it or the attempts run out.
    fn profile<T>(
        &mut self,
        agent: &AgentDefinition,
        requirements: &str,
        root: &str,
        accept: impl Fn(&str) -> Result<T, Rejection>,
    ) -> Result<Option<T>, CreationError> {
        let mut context = Context::new();
        let mut prompt = format!("Requirements:\n{}", requirements.trim());
        for attempt in 1..=self.config.max_attempts {
            self.log(Phase::Profiling, "attempt", attempt.to_string());
            let (terminal, ctx) = self.invoke(agent, &prompt, context, &NoTools)?;
            context = ctx;
            let rejection = match terminal {
                Terminal::Completed { text } => match extract_form_text(&text, root) {
                    Some(xml) => match accept(xml) {
                        Ok(v) => {
                            self.log(Phase::Profiling, "accepted", "");
                            self.close_phase(Phase::Profiling, context);
                            return Ok(Some(v));
                        }
                        Err(r) => r,
                    },
                    None => Rejection::Other(format!("The reply contains no <{root}> document.")),
                },
                other => Rejection::Other(format!("No form was produced ({}).", terminal_summary(&other))),
            };
            prompt = match rejection {
                Rejection::Diagnostics(diags) => {
                    let text = diagnostics_to_feedback(&diags)?;
                    let codes: Vec<&str> = diags.iter().map(|d| d.code.as_str()).collect();
                    self.log(Phase::Profiling, "rejected", codes.join(","));
                    self.history.push(diags);
                    text
                }
                Rejection::Other(msg) => {
                    self.log(Phase::Profiling, "rejected", msg.clone());
                    format!("{msg}\nSend the complete form again.")
                }
            };
        }
        self.close_phase(Phase::Profiling, context);
        Ok(None)
    }

    /// Runs one editor phase. `check` inspects the registry after each attempt and
    /// returns the task result, or the problems to report back.
    fn edit(
        &mut self,
        phase: Phase,
        agent: &AgentDefinition,
        brief: &str,
        tools: impl Fn() -> EditorTools<'a>,
        check: impl Fn(&Self, &EditorTools<'a>, &str) -> Result<Option<String>, Problems>,
    ) -> Result<Result<Option<String>, ()>, CreationError> {
        let mut context = Context::new();
        let mut prompt = brief.to_string();
        for attempt in 1..=self.config.max_attempts {
            self.log(phase, "attempt", attempt.to_string());
            let before = self.registry.snapshot()?;
            let runner = tools();
            let (terminal, ctx) = self.invoke(agent, &prompt, context, &runner)?;
            context = ctx;
            let verdict = match &terminal {
                Terminal::Completed { text } => check(self, &runner, text),
                other => Err(vec![format!("You stopped without a final reply ({}).", terminal_summary(other))]),
            };
            match verdict {
                Ok(result) => {
                    self.log(phase, "accepted", result.clone().unwrap_or_default());
                    self.artifacts.extend(runner.artifacts());
                    self.close_phase(phase, context);
                    return Ok(Ok(result));
                }
                Err(problems) => {
                    self.log(phase, "rejected", problems.join(" | "));
                    self.registry.restore(&before)?;
                    self.log(phase, "rollback", "attempt");
                    let mut msg = String::from("That attempt did not pass and its registry changes were undone:\n");
                    for p in &problems {
                        msg.push_str(&format!("- {p}\n"));
                    }
                    msg.push_str("Redo the work with these problems fixed.");
                    prompt = msg;
                }
            }
        }
        self.close_phase(phase, context);
        Ok(Err(()))
    }

    fn finish(mut self, phase: Phase, result: Option<String>) -> Result<PipelineOutcome, CreationError> {
        let success = phase == Phase::Done;
        let error = if success {
            None
        } else {
            self.registry.restore(&self.start)?;
            self.log(phase, "rollback", "pipeline");
            self.artifacts.clear();
            let last_problem = self
                .trace
                .records()
                .iter()
                .rev()
                .find(|r| r.action.as_deref() == Some("rejected"))
                .map(|r| r.detail.clone())
                .unwrap_or_default();
            Some(CreationError::PhaseExhausted {
                phase,
                attempts: self.config.max_attempts,
                last_problem,
            })
        };
        self.log(phase, if success { "done" } else { "failed" }, "");
        Ok(PipelineOutcome {
            phase_reached: phase,
            success,
            artifacts: self.artifacts,
            transcript: self.transcript,
            diagnostics_history: self.history,
            error,
            invocations: self.invocations,
            result,
            trace: self.trace,
        })
    }
}

fn terminal_summary(t: &Terminal) -> String {
    match t {
        Terminal::Completed { .. } => "completed".into(),
        Terminal::Transferred { target, .. } => format!("transferred to {target}"),
        Terminal::TurnLimit => "turn limit reached".into(),
        Terminal::Aborted { reason } => format!("aborted: {reason}"),
    }
}

/// Tool tests written by the tool editor as `<test=NAME>{json args}</test>`.
pub fn parse_tool_tests(text: &str) -> Vec<(String, Result<BTreeMap<String, String>, String>)> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find("<test=") {
        let after = &rest[start + "<test=".len()..];
        let Some(gt) = after.find('>') else { break };
        let name = after[..gt].trim().to_string();
        let body_start = &after[gt + 1..];
        let Some(end) = body_start.find("</test>") else {
            out.push((name, Err("test is missing its closing </test>".into())));
            break;
        };
        let body = body_start[..end].trim();
        let args = if body.is_empty() {
            Ok(BTreeMap::new())
        } else {
            serde_json::from_str(body)
                .ok()
                .and_then(editor::json_args)
                .ok_or_else(|| "test arguments must be a JSON object".to_string())
        };
        out.push((name, args));
        rest = &body_start[end + "</test>".len()..];
    }
    out
}

/// Creates the tools and agents an agent form describes, then optionally runs them on `task`.
pub fn run_agent_creation_pipeline(
    requirements: &str,
    registry: &Registry,
    task: Option<&str>,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, CreationError> {
    let mut s = Session::new(registry, config)?;

    let form = s.profile(&config.agent_profiling_agent, requirements, "agents", |xml| {
        let form = parse_agent_form(xml).map_err(|e| Rejection::Other(format!("The form could not be parsed: {e}")))?;
        let diags = validate_agent_form(&form, registry);
        if diags.is_empty() {
            Ok(form)
        } else {
            Err(Rejection::Diagnostics(diags))
        }
    })?;
    let Some(form) = form else {
        return s.finish(Phase::Profiling, None);
    };
    let form_xml = form.to_xml();

    let mut new_tools = Vec::new();
    for agent in &form.agents {
        for t in &agent.tools_new {
            if !new_tools.iter().any(|(n, _): &(String, String)| n == &t.name) {
                new_tools.push((t.name.clone(), t.description.clone()));
            }
        }
    }
    if !new_tools.is_empty() {
        let brief = tool_brief(&form_xml, &new_tools);
        let outcome = s.edit(
            Phase::Tools,
            &config.tool_editor_agent,
            &brief,
            || EditorTools::new(registry, &config.engine, &TOOL_EDITOR_TOOLS),
            |s, _, text| check_tools(s, &new_tools, text),
        )?;
        if outcome.is_err() {
            return s.finish(Phase::Tools, None);
        }
    }

    let brief = agent_brief(&form_xml, &form, task);
    let outcome = s.edit(
        Phase::Agents,
        &config.agent_editor_agent,
        &brief,
        || {
            EditorTools::new(registry, &config.engine, &AGENT_EDITOR_TOOLS)
                .with_limits(config.handoff_limits, config.run_limits)
        },
        |s, runner, _| check_agents(s, runner, &form, task),
    )?;
    match outcome {
        Ok(result) => s.finish(Phase::Done, result),
        Err(()) => s.finish(Phase::Agents, None),
    }
}

fn tool_brief(form_xml: &str, tools: &[(String, String)]) -> String {
    let mut b = String::from("Create these tools:\n");
    for (name, desc) in tools {
        b.push_str(&format!("- {name}: {}\n", desc.split_whitespace().collect::<Vec<_>>().join(" ")));
    }
    b.push_str("\nThey belong to this agent form:\n");
    b.push_str(form_xml);
    b
}

fn check_tools(s: &Session<'_>, tools: &[(String, String)], text: &str) -> Result<Option<String>, Problems> {
    let tests = parse_tool_tests(text);
    let mut problems = Vec::new();
    for (name, _) in tools {
        if !s.registry.contains(ItemKind::Tool, name) {
            problems.push(format!("tool {name} is not registered"));
            continue;
        }
        let mine: Vec<_> = tests.iter().filter(|(n, _)| n == name).collect();
        if mine.is_empty() {
            problems.push(format!("no <test={name}> was given"));
        }
        for (_, args) in mine {
            match args {
                Err(msg) => problems.push(format!("test of {name}: {msg}")),
                Ok(args) => match s.registry.run_tool(name, args) {
                    Ok(r) if r.is_ok() => {}
                    Ok(r) => problems.push(format!("test of {name} failed: {r}")),
                    Err(e) => problems.push(format!("test of {name} failed: {e}")),
                },
            }
        }
    }
    if problems.is_empty() {
        Ok(None)
    } else {
        Err(problems)
    }
}

fn agent_brief(form_xml: &str, form: &AgentForm, task: Option<&str>) -> String {
    let names: Vec<&str> = form.agents.iter().map(|a| a.name.as_str()).collect();
    let mut b = format!("Register the agents of this form: {}.\n", names.join(", "));
    if names.len() > 1 {
        b.push_str("There is more than one agent, so also create an orchestrator over all of them.\n");
    }
    if let Some(task) = task {
        b.push_str(&format!("Afterwards the runtime will run them on this task: {task}\n"));
    }
    b.push('\n');
    b.push_str(form_xml);
    b
}

fn check_agents(
    s: &Session<'_>,
    runner: &EditorTools<'_>,
    form: &AgentForm,
    task: Option<&str>,
) -> Result<Option<String>, Problems> {
    let mut problems: Problems = form
        .agents
        .iter()
        .filter(|a| !s.registry.contains(ItemKind::Agent, &a.name))
        .map(|a| format!("agent {} is not registered", a.name))
        .collect();
    let entry = if form.agents.len() > 1 {
        let wanted: Vec<&str> = form.agents.iter().map(|a| a.name.as_str()).collect();
        let orch = runner.orchestrators().into_iter().rev().find(|name| {
            s.registry
                .get_agent(name)
                .map(|o| wanted.iter().all(|w| o.transfer_targets.iter().any(|t| t == w)))
                .unwrap_or(false)
        });
        if orch.is_none() {
            problems.push("no orchestrator over all form agents was created".into());
        }
        orch
    } else {
        form.agents.first().map(|a| a.name.clone())
    };
    if !problems.is_empty() {
        return Err(problems);
    }
    let (Some(task), Some(entry)) = (task, entry) else {
        return Ok(None);
    };
    let agent = s
        .registry
        .get_agent(&entry)
        .map_err(|e| vec![format!("entry agent {entry}: {e}")])?;
    editor::run_entry_agent(s.registry, &s.config.engine, &agent, task, s.config.handoff_limits)
        .map(Some)
        .map_err(|(code, msg)| vec![format!("running {entry} on the task failed with {code}: {msg}")])
}

/// Creates a workflow (and its new agents) from requirements, then optionally runs it on `task`.
pub fn run_workflow_creation_pipeline(
    requirements: &str,
    registry: &Registry,
    task: Option<&str>,
    config: &PipelineConfig,
) -> Result<PipelineOutcome, CreationError> {
    let mut s = Session::new(registry, config)?;

    let form = s.profile(&config.workflow_profiling_agent, requirements, "workflow", |xml| {
        let form =
            parse_workflow_form(xml).map_err(|e| Rejection::Other(format!("The form could not be parsed: {e}")))?;
        let diags = validate_workflow_form(&form, registry);
        if diags.is_empty() {
            Ok(form)
        } else {
            Err(Rejection::Diagnostics(diags))
        }
    })?;
    let Some(form) = form else {
        return s.finish(Phase::Profiling, None);
    };
    let form_xml = form.to_xml();
    let brief = workflow_brief(&form_xml, &form, task);
    let outcome = s.edit(
        Phase::Workflow,
        &config.workflow_editor_agent,
        &brief,
        || {
            EditorTools::new(registry, &config.engine, &WORKFLOW_EDITOR_TOOLS)
                .with_pending_workflow(form_xml.clone())
                .with_limits(config.handoff_limits, config.run_limits)
        },
        |s, _, _| check_workflow(s, &form, task),
    )?;
    match outcome {
        Ok(result) => s.finish(Phase::Done, result),
        Err(()) => s.finish(Phase::Workflow, None),
    }
}

fn workflow_brief(form_xml: &str, form: &WorkflowForm, task: Option<&str>) -> String {
    let new: Vec<&str> = form
        .agents
        .iter()
        .filter(|a| a.category == AgentCategory::New)
        .map(|a| a.name.as_str())
        .collect();
    let mut b = format!("Register workflow {}.\n", form.name);
    if new.is_empty() {
        b.push_str("It uses only agents that already exist.\n");
    } else {
        b.push_str(&format!("Create these new agents first: {}.\n", new.join(", ")));
    }
    if let Some(task) = task {
        b.push_str(&format!("Afterwards the runtime will run it with this input: {task}\n"));
    }
    b.push('\n');
    b.push_str(form_xml);
    b
}

fn check_workflow(s: &Session<'_>, form: &WorkflowForm, task: Option<&str>) -> Result<Option<String>, Problems> {
    let mut problems: Problems = form
        .agents
        .iter()
        .filter(|a| a.category == AgentCategory::New && !s.registry.contains(ItemKind::Agent, &a.name))
        .map(|a| format!("new agent {} is not registered", a.name))
        .collect();
    let stored = match s.registry.get_workflow(&form.name).and_then(|w: WorkflowDefinition| w.parse()) {
        Ok(f) => Some(f),
        Err(e) => {
            problems.push(format!("workflow {} is not registered ({})", form.name, e.code()));
            None
        }
    };
    if !problems.is_empty() {
        return Err(problems);
    }
    let (Some(task), Some(stored)) = (task, stored) else {
        return Ok(None);
    };
    let env = WorkflowEnv {
        engine: &s.config.engine,
        tools: s.registry,
        agents: s.registry,
    };
    let run = run_workflow(&stored, task, &env, s.config.run_limits, Parallelism::Serial)
        .map_err(|e| vec![format!("workflow {} could not run: {e}", form.name)])?;
    match run.terminal.value() {
        Some(v) => Ok(Some(v.to_string())),
        None => Err(vec![format!("running workflow {} ended with {}", form.name, run.terminal)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::DiagCode;

    fn diag(code: DiagCode, loc: &str) -> Diagnostic {
        Diagnostic {
            code,
            message: "something is off".into(),
            location: loc.into(),
        }
    }

    #[test]
    fn feedback_lists_codes_in_order() {
        let text = diagnostics_to_feedback(&[
            diag(DiagCode::V5, "/workflow/events/event[3]"),
            diag(DiagCode::V2, "/workflow/events/event[1]"),
        ])
        .unwrap();
        let v5 = text.find("V5").unwrap();
        let v2 = text.find("V2").unwrap();
        assert!(v5 < v2);
        assert!(text.contains("/workflow/events/event[3]"));
        assert_eq!(diagnostics_to_feedback(&[]).unwrap_err().code(), "E_EMPTY");
    }

    #[test]
    fn tool_tests_parse() {
        let t = parse_tool_tests(r#"ok <test=add>{"a": 1, "b": "x"}</test> and <test=noop></test> <test=bad>[1]</test>"#);
        assert_eq!(t.len(), 3);
        assert_eq!(t[0].0, "add");
        let args = t[0].1.as_ref().unwrap();
        assert_eq!(args["a"], "1");
        assert_eq!(args["b"], "x");
        assert!(t[1].1.as_ref().unwrap().is_empty());
        assert!(t[2].1.is_err());
    }
}
