//! Event-graph execution of workflow forms.
//!
//! A run owns one [`RunState`]. Events become ready when every event they listen to has
//! completed (AND-join). The event's agent picks exactly one declared output; RESULT
//! publishes it to the blackboard, ABORT stops the run, GOTO resets the target's forward
//! closure so it runs again. In concurrent mode each wave of ready events runs on scoped
//! threads, and results are committed one by one in topological order.

mod graph;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::engine::Engine;
use crate::forms::{
    substitute_globals, ActionType, AgentCategory, Diagnostic, Event, GlobalVar, Output,
    WorkflowForm,
};
use crate::kernel::{run_agent_loop, AgentDefinition, AgentLookup, LoopLimits, Terminal, ToolRunner};
use crate::message::Context;
use crate::trace::{Trace, TraceRecord};

pub use graph::{compile_graph, EventGraph};

pub const DEFAULT_MAX_ITERATIONS: u32 = 3;
pub const DEFAULT_MAX_TOTAL_EVENTS: usize = 100;
/// Global variable that overrides the per-edge GOTO limit.
pub const MAX_ITERATIONS_GLOBAL: &str = "max_iterations";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkflowError {
    #[error("E_INVALID_FORM: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidForm(Vec<Diagnostic>),
    #[error("E_UNKNOWN_AGENT: event {event:?} uses agent {agent:?}, which is neither registered nor declared new")]
    UnknownAgent { event: String, agent: String },
    #[error("E_LIMITS: {0}")]
    Limits(String),
}

impl WorkflowError {
    pub fn code(&self) -> &'static str {
        match self {
            WorkflowError::InvalidForm(_) => "E_INVALID_FORM",
            WorkflowError::UnknownAgent { .. } => "E_UNKNOWN_AGENT",
            WorkflowError::Limits(_) => "E_LIMITS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunLimits {
    pub max_iterations_per_goto_edge: u32,
    pub max_total_events: usize,
}

impl Default for RunLimits {
    fn default() -> Self {
        Self {
            max_iterations_per_goto_edge: DEFAULT_MAX_ITERATIONS,
            max_total_events: DEFAULT_MAX_TOTAL_EVENTS,
        }
    }
}

impl RunLimits {
    /// Applies a `max_iterations` global variable, if the form declares one.
    pub fn with_globals(mut self, globals: &[GlobalVar]) -> Result<Self, WorkflowError> {
        if let Some(g) = globals.iter().find(|g| g.key == MAX_ITERATIONS_GLOBAL) {
            self.max_iterations_per_goto_edge = g.value.trim().parse().map_err(|_| {
                WorkflowError::Limits(format!("{MAX_ITERATIONS_GLOBAL} = {:?} is not a positive integer", g.value))
            })?;
        }
        self.check()?;
        Ok(self)
    }

    pub fn check(&self) -> Result<(), WorkflowError> {
        if self.max_iterations_per_goto_edge == 0 || self.max_total_events == 0 {
            return Err(WorkflowError::Limits("limits must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    #[default]
    Serial,
    Concurrent,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventStatus {
    Pending,
    Running,
    /// Completed, with the output key the agent selected.
    Completed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunTerminal {
    Completed { value: String },
    Aborted { code: String, reason: String },
}

impl RunTerminal {
    fn aborted(code: &str, reason: impl Into<String>) -> Self {
        RunTerminal::Aborted {
            code: code.to_string(),
            reason: reason.into(),
        }
    }

    pub fn code(&self) -> Option<&str> {
        match self {
            RunTerminal::Aborted { code, .. } => Some(code),
            RunTerminal::Completed { .. } => None,
        }
    }

    pub fn value(&self) -> Option<&str> {
        match self {
            RunTerminal::Completed { value } => Some(value),
            RunTerminal::Aborted { .. } => None,
        }
    }
}

impl fmt::Display for RunTerminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunTerminal::Completed { value } => write!(f, "completed: {value}"),
            RunTerminal::Aborted { code, reason } => write!(f, "aborted: {code}: {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunState {
    pub statuses: BTreeMap<String, EventStatus>,
    pub blackboard: BTreeMap<String, String>,
    pub loop_counters: BTreeMap<(String, String), u32>,
    pub terminal: Option<RunTerminal>,
    /// How many times each event has been dispatched.
    pub executions: BTreeMap<String, usize>,
    published: BTreeMap<String, Vec<String>>,
    /// GOTO target → (output key, value) chosen by the event that sent control back.
    feedback: BTreeMap<String, (String, String)>,
}

impl RunState {
    pub fn new(graph: &EventGraph) -> Self {
        Self {
            statuses: graph
                .form()
                .events
                .iter()
                .map(|e| (e.name.clone(), EventStatus::Pending))
                .collect(),
            blackboard: BTreeMap::new(),
            loop_counters: BTreeMap::new(),
            terminal: None,
            executions: BTreeMap::new(),
            published: BTreeMap::new(),
            feedback: BTreeMap::new(),
        }
    }

    pub fn status(&self, event: &str) -> Option<&EventStatus> {
        self.statuses.get(event)
    }

    fn is_completed(&self, event: &str) -> bool {
        matches!(self.statuses.get(event), Some(EventStatus::Completed(_)))
    }

    pub fn all_completed(&self) -> bool {
        self.statuses.values().all(|s| matches!(s, EventStatus::Completed(_)))
    }

    pub fn total_executions(&self) -> usize {
        self.executions.values().sum()
    }

    pub fn counters_snapshot(&self) -> BTreeMap<String, u32> {
        self.loop_counters
            .iter()
            .map(|((s, t), n)| (format!("{s}->{t}"), *n))
            .collect()
    }

    fn publish(&mut self, event: &str, key: &str, value: &str) {
        self.blackboard.insert(key.to_string(), value.to_string());
        let keys = self.published.entry(event.to_string()).or_default();
        if !keys.iter().any(|k| k == key) {
            keys.push(key.to_string());
        }
    }
}

/// Pending events whose listened events have all completed, in topological order.
pub fn ready_set(graph: &EventGraph, state: &RunState) -> Vec<String> {
    graph
        .topo_indices()
        .iter()
        .map(|&i| graph.event_at(i))
        .filter(|e| matches!(state.status(&e.name), Some(EventStatus::Pending)))
        .filter(|e| e.listen.iter().all(|l| state.is_completed(l)))
        .map(|e| e.name.clone())
        .collect()
}

/// The ready events that can run now.
///
/// A ready event is held back while one of its inputs is missing and an unfinished event
/// that is not downstream of it can still publish that input. If that would hold back
/// everything, the ready set is returned as is and the missing input fails the event.
fn dispatchable(graph: &EventGraph, state: &RunState) -> Vec<String> {
    let ready = ready_set(graph, state);
    let runnable: Vec<String> = ready
        .iter()
        .filter(|name| {
            let i = graph.idx(name).expect("ready events exist");
            let downstream = graph.closure_of(i);
            graph.event_at(i).inputs.iter().all(|input| {
                state.blackboard.contains_key(&input.key)
                    || !graph.producers(&input.key).any(|p| {
                        p != i && !downstream.contains(&p) && !state.is_completed(&graph.event_at(p).name)
                    })
            })
        })
        .cloned()
        .collect();
    if runnable.is_empty() {
        ready
    } else {
        runnable
    }
}

/// Applies the output `chosen` by `event` to `state`.
pub fn apply_action(
    graph: &EventGraph,
    state: &mut RunState,
    event: &str,
    chosen: &Output,
    value: &str,
    limits: &RunLimits,
) {
    state.feedback.remove(event);
    match chosen.action.kind {
        ActionType::Result => {
            state.publish(event, &chosen.key, value);
            state
                .statuses
                .insert(event.to_string(), EventStatus::Completed(chosen.key.clone()));
        }
        ActionType::Abort => {
            state
                .statuses
                .insert(event.to_string(), EventStatus::Completed(chosen.key.clone()));
            state.terminal = Some(RunTerminal::aborted(
                "E_ABORTED",
                format!("{event} selected {}: {value}", chosen.key),
            ));
        }
        ActionType::Goto => {
            let target = chosen.action.value.clone().unwrap_or_default();
            let counter = state
                .loop_counters
                .entry((event.to_string(), target.clone()))
                .or_insert(0);
            *counter += 1;
            if *counter > limits.max_iterations_per_goto_edge {
                state
                    .statuses
                    .insert(event.to_string(), EventStatus::Completed(chosen.key.clone()));
                state.terminal = Some(RunTerminal::aborted(
                    "E_LOOP_LIMIT",
                    format!(
                        "GOTO {event} -> {target} exceeded {} iterations",
                        limits.max_iterations_per_goto_edge
                    ),
                ));
                return;
            }
            let mut reset: BTreeSet<String> = graph.forward_closure(&target);
            let source_in_closure = reset.contains(event);
            reset.insert(event.to_string());
            // Keys still published by an event outside the reset set stay on the board.
            let kept: BTreeSet<&String> = state
                .published
                .iter()
                .filter(|(e, _)| !reset.contains(*e))
                .flat_map(|(_, keys)| keys)
                .collect();
            let mut removed = Vec::new();
            for e in &reset {
                if let Some(keys) = state.published.get(e) {
                    removed.extend(keys.iter().filter(|k| !kept.contains(k)).cloned());
                }
            }
            for k in removed {
                state.blackboard.remove(&k);
            }
            for e in &reset {
                state.published.remove(e);
                state.statuses.insert(e.clone(), EventStatus::Pending);
            }
            if !source_in_closure {
                state
                    .statuses
                    .insert(event.to_string(), EventStatus::Completed(chosen.key.clone()));
            }
            state
                .feedback
                .insert(target, (chosen.key.clone(), value.to_string()));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{code}: {message}")]
pub struct EventError {
    pub code: &'static str,
    pub message: String,
}

impl EventError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub key: String,
    pub value: String,
    /// Agent runs used, 1 or 2.
    pub attempts: usize,
}

/// The prompt an event's agent receives.
pub fn render_event_prompt(
    event: &Event,
    task: &str,
    inputs: &BTreeMap<String, String>,
    feedback: Option<(&str, &str)>,
) -> String {
    let mut p = String::new();
    if !task.is_empty() {
        p.push_str("Task: ");
        p.push_str(task);
        p.push_str("\n\n");
    }
    if !event.inputs.is_empty() {
        p.push_str("Inputs:\n");
        for input in &event.inputs {
            let value = inputs.get(&input.key).map(String::as_str).unwrap_or("");
            p.push_str(&format!(
                "<input={}>\n{}\n</input>\n({})\n",
                input.key, value, input.description
            ));
        }
        p.push('\n');
    }
    if let Some((key, value)) = feedback {
        p.push_str(&format!(
            "An earlier pass was sent back with this {key}:\n{value}\n\n"
        ));
    }
    p.push_str("Declared outputs:\n");
    for o in &event.outputs {
        p.push_str(&format!("- {}: {}", o.key, o.description));
        if let Some(c) = &o.condition {
            p.push_str(&format!(" Choose this when: {c}"));
        }
        p.push('\n');
    }
    p.push_str(
        "\nFinish with exactly one declared output written as <output=KEY>VALUE</output>.",
    );
    p
}

/// Reads the agent's selected output from its final answer.
pub fn select_output(event: &Event, text: &str) -> Result<(String, String), EventError> {
    if let Some(start) = text.find("<output=") {
        let rest = &text[start + "<output=".len()..];
        let Some(close) = rest.find('>') else {
            return Err(EventError::new("E_NO_OUTPUT", "unterminated <output=KEY> tag"));
        };
        let key = rest[..close].trim().trim_matches('"').to_string();
        let body = &rest[close + 1..];
        let value = match body.find("</output>") {
            Some(end) => &body[..end],
            None => body,
        };
        if event.output(&key).is_none() {
            let declared: Vec<&str> = event.outputs.iter().map(|o| o.key.as_str()).collect();
            return Err(EventError::new(
                "E_OUTPUT_UNDECLARED",
                format!("{key:?} is not a declared output; choose one of {}", declared.join(", ")),
            ));
        }
        return Ok((key, value.trim().to_string()));
    }
    match event.outputs.as_slice() {
        [only] if !text.trim().is_empty() => Ok((only.key.clone(), text.trim().to_string())),
        _ => Err(EventError::new(
            "E_NO_OUTPUT",
            "the answer did not select an output; wrap it as <output=KEY>VALUE</output>",
        )),
    }
}

/// Runs one event's agent and returns the output it selected.
///
/// A missing or undeclared selection is answered with a correction and one more agent run.
pub fn execute_event(
    event: &Event,
    inputs: &BTreeMap<String, String>,
    agent: &AgentDefinition,
    engine: &Engine,
    tools: &dyn ToolRunner,
    globals: &[GlobalVar],
    feedback: Option<(&str, &str)>,
) -> Result<Selection, EventError> {
    let agent = agent
        .with_globals(globals)
        .map_err(|e| EventError::new("E_UNBOUND", e.to_string()))?;
    let task = substitute_globals(event.task.as_deref().unwrap_or(""), globals)
        .map_err(|e| EventError::new("E_UNBOUND", e.to_string()))?;
    if let Some(missing) = event.inputs.iter().find(|i| !inputs.contains_key(&i.key)) {
        return Err(EventError::new(
            "E_MISSING_INPUT",
            format!("{} needs {:?}, which is not on the blackboard", event.name, missing.key),
        ));
    }
    let mut message = render_event_prompt(event, &task, inputs, feedback);
    let mut context = Context::new();
    for attempt in 1..=2 {
        let outcome = run_agent_loop(&agent, &message, context, engine, tools, LoopLimits::default())
            .map_err(|e| EventError::new(e.code(), e.to_string()))?;
        let failure = match &outcome.terminal {
            Terminal::Completed { text } => match select_output(event, text) {
                Ok((key, value)) => {
                    return Ok(Selection {
                        key,
                        value,
                        attempts: attempt,
                    })
                }
                Err(e) => e,
            },
            Terminal::Aborted { reason } => return Err(EventError::new("E_BACKEND", reason.clone())),
            Terminal::TurnLimit => EventError::new("E_NO_OUTPUT", "the agent ran out of turns"),
            Terminal::Transferred { target, .. } => EventError::new(
                "E_NO_OUTPUT",
                format!("the agent transferred to {target} instead of answering"),
            ),
        };
        if attempt == 2 {
            return Err(failure);
        }
        message = format!("{}\nAnswer again with exactly one <output=KEY>VALUE</output>.", failure);
        context = outcome.context;
    }
    unreachable!("the loop returns on its second attempt")
}

/// Everything a run needs besides the form.
pub struct WorkflowEnv<'a> {
    pub engine: &'a Engine,
    pub tools: &'a dyn ToolRunner,
    pub agents: &'a dyn AgentLookup,
}

#[derive(Debug, Clone)]
pub struct WorkflowRun {
    pub terminal: RunTerminal,
    pub state: RunState,
    pub trace: Trace,
}

/// Resolves each event's agent once, before the run starts.
fn resolve_agents(
    form: &WorkflowForm,
    lookup: &dyn AgentLookup,
) -> Result<BTreeMap<String, AgentDefinition>, WorkflowError> {
    let mut out = BTreeMap::new();
    for event in &form.events {
        let Some(ea) = &event.agent else { continue };
        let declared = form.agents.iter().find(|a| a.name == ea.name);
        let mut def = match lookup.agent(&ea.name) {
            Some(def) => def,
            None => match declared {
                Some(d) if d.category == AgentCategory::New => synthesize_agent(d),
                _ => {
                    return Err(WorkflowError::UnknownAgent {
                        event: event.name.clone(),
                        agent: ea.name.clone(),
                    })
                }
            },
        };
        if let Some(model) = &ea.model {
            def.model = model.clone();
        }
        out.insert(event.name.clone(), def);
    }
    Ok(out)
}

/// A plain agent built from a `category="new"` declaration.
pub fn synthesize_agent(declared: &crate::forms::WorkflowAgent) -> AgentDefinition {
    AgentDefinition::new(
        &declared.name,
        format!(
            "You are {}. {}\nWork only from the inputs you are given and answer in the requested output format.",
            declared.name, declared.description
        ),
    )
    .with_description(&declared.description)
    .with_tools(declared.tools.iter().map(|t| t.name.clone()))
}

type Dispatch = (usize, Result<Selection, EventError>);

pub fn run_workflow(
    form: &WorkflowForm,
    system_input_value: &str,
    env: &WorkflowEnv<'_>,
    limits: RunLimits,
    parallelism: Parallelism,
) -> Result<WorkflowRun, WorkflowError> {
    let graph = compile_graph(form)?;
    let limits = limits.with_globals(&form.global_variables)?;
    let agents = resolve_agents(form, env.agents)?;
    let globals = &form.global_variables;

    let mut state = RunState::new(&graph);
    let mut trace = Trace::new();
    let input_key = form.system_input[0].key.clone();
    let output_key = form.system_output[0].key.clone();
    state
        .blackboard
        .insert(input_key.clone(), system_input_value.to_string());
    trace.push(TraceRecord::new("seed").key(&input_key));

    while state.terminal.is_none() {
        let mut batch = dispatchable(&graph, &state);
        if batch.is_empty() {
            state.terminal = Some(if state.all_completed() {
                match state.blackboard.get(&output_key) {
                    Some(v) => RunTerminal::Completed { value: v.clone() },
                    None => RunTerminal::aborted(
                        "E_MISSING_OUTPUT",
                        format!("every event completed but {output_key:?} was never published"),
                    ),
                }
            } else {
                RunTerminal::aborted("E_STALLED", "no event can run and the workflow is unfinished")
            });
            break;
        }
        let budget = limits.max_total_events.saturating_sub(state.total_executions());
        if budget == 0 {
            state.terminal = Some(RunTerminal::aborted(
                "E_TOTAL_LIMIT",
                format!("more than {} event executions", limits.max_total_events),
            ));
            break;
        }
        let width = match parallelism {
            Parallelism::Serial => 1,
            Parallelism::Concurrent => budget,
        };
        batch.truncate(width);

        let mut jobs = Vec::new();
        for name in &batch {
            let i = graph.idx(name).expect("batch events exist");
            state.statuses.insert(name.clone(), EventStatus::Running);
            *state.executions.entry(name.clone()).or_insert(0) += 1;
            trace.push(
                TraceRecord::new("start")
                    .event(name)
                    .counters(state.counters_snapshot()),
            );
            let event = graph.event_at(i);
            let inputs: BTreeMap<String, String> = event
                .inputs
                .iter()
                .filter_map(|inp| state.blackboard.get(&inp.key).map(|v| (inp.key.clone(), v.clone())))
                .collect();
            let feedback = state.feedback.get(name).cloned();
            jobs.push((i, inputs, feedback));
        }

        let run_job = |(i, inputs, feedback): &(usize, BTreeMap<String, String>, Option<(String, String)>)| -> Dispatch {
            let event = graph.event_at(*i);
            if event.is_start() {
                let value = inputs.get(&input_key).cloned().unwrap_or_default();
                let key = event.outputs.first().map(|o| o.key.clone()).unwrap_or_default();
                return (*i, Ok(Selection { key, value, attempts: 0 }));
            }
            let agent = &agents[&event.name];
            let fb = feedback.as_ref().map(|(k, v)| (k.as_str(), v.as_str()));
            (*i, execute_event(event, inputs, agent, env.engine, env.tools, globals, fb))
        };

        let results: Vec<Dispatch> = if jobs.len() == 1 {
            vec![run_job(&jobs[0])]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = jobs.iter().map(|job| s.spawn(|| run_job(job))).collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("event worker panicked"))
                    .collect()
            })
        };

        for (i, result) in results {
            let event = graph.event_at(i);
            if state.terminal.is_some() || state.status(&event.name) != Some(&EventStatus::Running) {
                trace.push(TraceRecord::new("discard").event(&event.name));
                continue;
            }
            match result {
                Ok(sel) if event.is_start() => {
                    for o in &event.outputs {
                        state.publish(&event.name, &o.key, &sel.value);
                    }
                    state
                        .statuses
                        .insert(event.name.clone(), EventStatus::Completed(sel.key.clone()));
                    trace.push(
                        TraceRecord::new("commit")
                            .event(&event.name)
                            .action(ActionType::Result.as_str())
                            .key(&sel.key),
                    );
                }
                Ok(sel) => {
                    let chosen = event.output(&sel.key).expect("selection is declared");
                    apply_action(&graph, &mut state, &event.name, chosen, &sel.value, &limits);
                    trace.push(
                        TraceRecord::new("commit")
                            .event(&event.name)
                            .action(chosen.action.kind.as_str())
                            .key(&sel.key)
                            .counters(state.counters_snapshot()),
                    );
                }
                Err(e) => {
                    trace.push(TraceRecord::new("fail").event(&event.name).detail(e.to_string()));
                    state.terminal = Some(RunTerminal::aborted(e.code, format!("{}: {}", event.name, e.message)));
                }
            }
        }
    }

    let terminal = state.terminal.clone().expect("loop exits with a terminal");
    let mut record = TraceRecord::new("terminal").counters(state.counters_snapshot());
    record = match &terminal {
        RunTerminal::Completed { .. } => record.action("COMPLETED").key(&output_key),
        RunTerminal::Aborted { code, reason } => record.action("ABORTED").detail(format!("{code}: {reason}")),
    };
    trace.push(record);
    Ok(WorkflowRun {
        terminal,
        state,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{KeyDesc, OutputAction};

    fn form() -> WorkflowForm {
        let out = |key: &str, kind: ActionType, value: Option<&str>| Output {
            key: key.into(),
            description: String::new(),
            condition: Some("c".into()),
            action: OutputAction {
                kind,
                value: value.map(Into::into),
            },
        };
        let ev = |name: &str, listen: &[&str], inputs: &[&str], outputs: Vec<Output>| Event {
            name: name.into(),
            inputs: inputs.iter().map(|k| KeyDesc::new(*k, "")).collect(),
            task: None,
            outputs,
            listen: listen.iter().map(|s| s.to_string()).collect(),
            agent: (name != "on_start").then(|| crate::forms::EventAgent {
                name: "A".into(),
                model: None,
            }),
        };
        WorkflowForm {
            name: "loop".into(),
            system_input: vec![KeyDesc::new("q", "")],
            system_output: vec![KeyDesc::new("done", "")],
            agents: vec![],
            global_variables: vec![],
            events: vec![
                ev("on_start", &[], &["q"], vec![out("q", ActionType::Result, None)]),
                ev("side", &["on_start"], &["q"], vec![out("s", ActionType::Result, None)]),
                ev("draft", &["on_start"], &["q"], vec![out("d", ActionType::Result, None)]),
                ev(
                    "check",
                    &["draft"],
                    &["d"],
                    vec![
                        out("done", ActionType::Result, None),
                        out("redo", ActionType::Goto, Some("draft")),
                    ],
                ),
            ],
        }
    }

    #[test]
    fn topo_order_breaks_ties_by_document_order() {
        let g = compile_graph(&form()).unwrap();
        assert_eq!(g.topo_order(), vec!["on_start", "side", "draft", "check"]);
        assert_eq!(g.goto_edges(), &[("check".to_string(), "draft".to_string())]);
    }

    #[test]
    fn goto_resets_closure_and_removes_keys() {
        let g = compile_graph(&form()).unwrap();
        let mut s = RunState::new(&g);
        let limits = RunLimits::default();
        for (e, k) in [("side", "s"), ("draft", "d")] {
            let o = g.event(e).unwrap().output(k).unwrap().clone();
            apply_action(&g, &mut s, e, &o, "v", &limits);
        }
        s.statuses.insert("on_start".into(), EventStatus::Completed("q".into()));
        let redo = g.event("check").unwrap().output("redo").unwrap().clone();
        apply_action(&g, &mut s, "check", &redo, "try harder", &limits);
        assert_eq!(s.status("draft"), Some(&EventStatus::Pending));
        assert_eq!(s.status("check"), Some(&EventStatus::Pending));
        assert_eq!(s.status("side"), Some(&EventStatus::Completed("s".into())));
        assert!(!s.blackboard.contains_key("d"));
        assert!(s.blackboard.contains_key("s"));
        assert_eq!(ready_set(&g, &s), vec!["draft"]);
        for _ in 0..2 {
            apply_action(&g, &mut s, "check", &redo, "x", &limits);
        }
        assert!(s.terminal.is_none());
        apply_action(&g, &mut s, "check", &redo, "x", &limits);
        assert_eq!(s.terminal.as_ref().unwrap().code(), Some("E_LOOP_LIMIT"));
    }

    #[test]
    fn output_selection() {
        let f = form();
        let check = f.event("check").unwrap();
        assert_eq!(
            select_output(check, "ok <output=done>fine</output>").unwrap(),
            ("done".into(), "fine".into())
        );
        assert_eq!(select_output(check, "<output=bogus>x</output>").unwrap_err().code, "E_OUTPUT_UNDECLARED");
        assert_eq!(select_output(check, "just text").unwrap_err().code, "E_NO_OUTPUT");
        let side = f.event("side").unwrap();
        assert_eq!(select_output(side, " plain ").unwrap(), ("s".into(), "plain".into()));
    }

    #[test]
    fn limits_from_globals() {
        let g = [GlobalVar::new("max_iterations", "5")];
        assert_eq!(RunLimits::default().with_globals(&g).unwrap().max_iterations_per_goto_edge, 5);
        let bad = [GlobalVar::new("max_iterations", "0")];
        assert!(RunLimits::default().with_globals(&bad).is_err());
    }
}
