//! Static checks over parsed forms. Diagnostics are data, not errors: a form with an empty
//! diagnostic list is accepted.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::globals::placeholders;
use super::{ActionType, AgentCategory, AgentForm, WorkflowForm};
use crate::message::is_identifier;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    A1,
    A2,
    A3,
    A4,
    A5,
    V1,
    V2,
    V3,
    V4,
    V5,
    V6,
    V7,
    V8,
    V9,
    V10,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::A1 => "A1",
            DiagCode::A2 => "A2",
            DiagCode::A3 => "A3",
            DiagCode::A4 => "A4",
            DiagCode::A5 => "A5",
            DiagCode::V1 => "V1",
            DiagCode::V2 => "V2",
            DiagCode::V3 => "V3",
            DiagCode::V4 => "V4",
            DiagCode::V5 => "V5",
            DiagCode::V6 => "V6",
            DiagCode::V7 => "V7",
            DiagCode::V8 => "V8",
            DiagCode::V9 => "V9",
            DiagCode::V10 => "V10",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub message: String,
    pub location: String,
}

impl Diagnostic {
    fn new(code: DiagCode, location: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            location: location.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.code, self.location, self.message)
    }
}

/// What validation needs to know about the registry.
pub trait RegistryView {
    fn has_tool(&self, name: &str) -> bool;
    fn has_agent(&self, name: &str) -> bool;
    fn has_workflow(&self, name: &str) -> bool;
}

/// Name-set registry view, for tests and offline validation.
#[derive(Debug, Clone, Default)]
pub struct StaticRegistry {
    pub tools: BTreeSet<String>,
    pub agents: BTreeSet<String>,
    pub workflows: BTreeSet<String>,
}

impl StaticRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tool(mut self, name: &str) -> Self {
        self.tools.insert(name.to_string());
        self
    }

    pub fn agent(mut self, name: &str) -> Self {
        self.agents.insert(name.to_string());
        self
    }

    pub fn workflow(mut self, name: &str) -> Self {
        self.workflows.insert(name.to_string());
        self
    }
}

impl RegistryView for StaticRegistry {
    fn has_tool(&self, name: &str) -> bool {
        self.tools.contains(name)
    }
    fn has_agent(&self, name: &str) -> bool {
        self.agents.contains(name)
    }
    fn has_workflow(&self, name: &str) -> bool {
        self.workflows.contains(name)
    }
}

pub fn validate_agent_form(form: &AgentForm, registry: &dyn RegistryView) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if form.system_output.len() != 1 {
        out.push(Diagnostic::new(
            DiagCode::A1,
            "/agents/system_output",
            format!("expected exactly one key pair, found {}", form.system_output.len()),
        ));
    }
    let globals: HashSet<&str> = form.global_variables.iter().map(|g| g.key.as_str()).collect();
    let mut names = HashSet::new();
    for (i, agent) in form.agents.iter().enumerate() {
        let path = format!("/agents/agent[{}]", i + 1);
        for (field, pairs) in [("agent_input", &agent.agent_input), ("agent_output", &agent.agent_output)] {
            if pairs.len() != 1 {
                out.push(Diagnostic::new(
                    DiagCode::A1,
                    format!("{path}/{field}"),
                    format!("expected exactly one key pair, found {}", pairs.len()),
                ));
            }
        }
        for key in placeholders(&agent.instructions) {
            if !globals.contains(key.as_str()) {
                out.push(Diagnostic::new(
                    DiagCode::A2,
                    format!("{path}/instructions"),
                    format!("placeholder {{{key}}} has no global variable"),
                ));
            }
        }
        for (j, tool) in agent.tools_existing.iter().enumerate() {
            if !registry.has_tool(&tool.name) {
                out.push(Diagnostic::new(
                    DiagCode::A3,
                    format!("{path}/tools[@category=\"existing\"]/tool[{}]", j + 1),
                    format!("tool {:?} is not in the registry", tool.name),
                ));
            }
        }
        if !names.insert(agent.name.as_str()) {
            out.push(Diagnostic::new(
                DiagCode::A4,
                format!("{path}/name"),
                format!("agent name {:?} is used twice", agent.name),
            ));
        }
    }
    if let [agent] = form.agents.as_slice() {
        if let ([sys], [own]) = (form.system_output.as_slice(), agent.agent_output.as_slice()) {
            if sys.key != own.key {
                out.push(Diagnostic::new(
                    DiagCode::A5,
                    "/agents/agent[1]/agent_output",
                    format!("agent output key {:?} differs from system output key {:?}", own.key, sys.key),
                ));
            }
        }
    }
    out
}

pub fn validate_workflow_form(form: &WorkflowForm, registry: &dyn RegistryView) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let ev = WorkflowForm::event_path;

    // V1
    if !is_identifier(&form.name) {
        out.push(Diagnostic::new(
            DiagCode::V1,
            "/workflow/name",
            format!("{:?} is not a single underscore-joined token", form.name),
        ));
    } else if registry.has_workflow(&form.name) {
        out.push(Diagnostic::new(
            DiagCode::V1,
            "/workflow/name",
            format!("a workflow named {:?} already exists", form.name),
        ));
    }

    // V9
    for (field, pairs) in [("system_input", &form.system_input), ("system_output", &form.system_output)] {
        if pairs.len() != 1 {
            out.push(Diagnostic::new(
                DiagCode::V9,
                format!("/workflow/{field}"),
                format!("expected exactly one key pair, found {}", pairs.len()),
            ));
        }
    }
    let system_inputs: BTreeSet<&str> = form.system_input.iter().map(|k| k.key.as_str()).collect();

    // V2
    match form.events.iter().position(|e| e.is_start()) {
        None => out.push(Diagnostic::new(DiagCode::V2, "/workflow/events", "no on_start event")),
        Some(idx) => {
            let start = &form.events[idx];
            let path = ev(idx);
            if idx != 0 {
                out.push(Diagnostic::new(DiagCode::V2, &path, "on_start must be the first event"));
            }
            if start.agent.is_some() || start.task.is_some() || !start.listen.is_empty() {
                out.push(Diagnostic::new(
                    DiagCode::V2,
                    &path,
                    "on_start must not have an agent, task or listen list",
                ));
            }
            let inputs: BTreeSet<&str> = start.inputs.iter().map(|k| k.key.as_str()).collect();
            if inputs != system_inputs {
                out.push(Diagnostic::new(
                    DiagCode::V2,
                    format!("{path}/inputs"),
                    "on_start inputs must equal the system input keys",
                ));
            }
            let outputs: BTreeSet<&str> = start.outputs.iter().map(|o| o.key.as_str()).collect();
            let all_result = start.outputs.iter().all(|o| o.action.kind == ActionType::Result);
            if outputs != inputs || !all_result {
                out.push(Diagnostic::new(
                    DiagCode::V2,
                    format!("{path}/outputs"),
                    "on_start must pass its inputs through as RESULT outputs",
                ));
            }
        }
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    for (i, e) in form.events.iter().enumerate() {
        if index.insert(e.name.as_str(), i).is_some() {
            out.push(Diagnostic::new(
                DiagCode::V10,
                format!("{}/name", ev(i)),
                format!("event name {:?} is used twice", e.name),
            ));
        }
    }

    // Keys any event can publish. An input is satisfiable when some other event publishes it
    // or it comes from the system input; listening to the producer is not required because
    // loop bodies read keys from events they do not listen to.
    let mut producers: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, e) in form.events.iter().enumerate() {
        for o in &e.outputs {
            if o.action.kind == ActionType::Result {
                producers.entry(o.key.as_str()).or_default().push(i);
            }
        }
    }

    let globals: HashSet<&str> = form.global_variables.iter().map(|g| g.key.as_str()).collect();
    let declared: HashMap<&str, AgentCategory> =
        form.agents.iter().map(|a| (a.name.as_str(), a.category)).collect();

    for (j, a) in form.agents.iter().enumerate() {
        if a.category == AgentCategory::Existing && !registry.has_agent(&a.name) {
            out.push(Diagnostic::new(
                DiagCode::V8,
                format!("/workflow/agents/agent[{}]", j + 1),
                format!("existing agent {:?} is not in the registry", a.name),
            ));
        }
    }

    for (i, e) in form.events.iter().enumerate() {
        let path = ev(i);
        if !e.is_start() {
            // V3
            for (k, input) in e.inputs.iter().enumerate() {
                let from_system = system_inputs.contains(input.key.as_str());
                let from_event = producers
                    .get(input.key.as_str())
                    .is_some_and(|p| p.iter().any(|&src| src != i));
                if !from_system && !from_event {
                    out.push(Diagnostic::new(
                        DiagCode::V3,
                        format!("{path}/inputs/input[{}]", k + 1),
                        format!("input {:?} is not produced by any other event", input.key),
                    ));
                }
            }
            // V4
            if e.listen.is_empty() {
                out.push(Diagnostic::new(DiagCode::V4, &path, "event has no listen list"));
            }
            if e.agent.is_none() {
                out.push(Diagnostic::new(DiagCode::V4, &path, "event has no agent"));
            }
            for (k, l) in e.listen.iter().enumerate() {
                if !index.contains_key(l.as_str()) {
                    out.push(Diagnostic::new(
                        DiagCode::V4,
                        format!("{path}/listen/event[{}]", k + 1),
                        format!("listens to unknown event {l:?}"),
                    ));
                }
            }
        }

        // V5
        for (k, o) in e.outputs.iter().enumerate() {
            if o.action.kind != ActionType::Goto {
                continue;
            }
            let opath = format!("{path}/outputs/output[{}]/action", k + 1);
            match o.action.value.as_deref() {
                None => out.push(Diagnostic::new(DiagCode::V5, opath, "GOTO without a target")),
                Some(target) => match index.get(target) {
                    None => out.push(Diagnostic::new(
                        DiagCode::V5,
                        opath,
                        format!("GOTO target {target:?} does not exist"),
                    )),
                    Some(&t) if form.events[t].listen.iter().any(|l| *l == e.name) => {
                        out.push(Diagnostic::new(
                            DiagCode::V5,
                            opath,
                            format!("GOTO target {target:?} listens to {:?}", e.name),
                        ))
                    }
                    Some(_) => {}
                },
            }
        }

        // V6
        if e.outputs.len() > 1 {
            for (k, o) in e.outputs.iter().enumerate() {
                if o.condition.as_deref().is_none_or(str::is_empty) {
                    out.push(Diagnostic::new(
                        DiagCode::V6,
                        format!("{path}/outputs/output[{}]", k + 1),
                        "output of a multi-output event has no condition",
                    ));
                }
            }
            let results = e.outputs.iter().filter(|o| o.action.kind == ActionType::Result).count();
            if results > 1 {
                out.push(Diagnostic::new(
                    DiagCode::V6,
                    format!("{path}/outputs"),
                    format!("{results} RESULT outputs; at most one is allowed"),
                ));
            }
        }

        // V8
        if let Some(agent) = &e.agent {
            let ok = match declared.get(agent.name.as_str()) {
                Some(AgentCategory::New) => true,
                _ => registry.has_agent(&agent.name),
            };
            if !ok {
                out.push(Diagnostic::new(
                    DiagCode::V8,
                    format!("{path}/agent/name"),
                    format!("agent {:?} is neither registered nor declared new", agent.name),
                ));
            }
        }
        if let Some(task) = &e.task {
            for key in placeholders(task) {
                if !globals.contains(key.as_str()) {
                    out.push(Diagnostic::new(
                        DiagCode::V8,
                        format!("{path}/task"),
                        format!("placeholder {{{key}}} has no global variable"),
                    ));
                }
            }
        }
    }

    // V7
    for (j, sys) in form.system_output.iter().enumerate() {
        if !producers.contains_key(sys.key.as_str()) {
            out.push(Diagnostic::new(
                DiagCode::V7,
                format!("/workflow/system_output/key[{}]", j + 1),
                format!("no RESULT output publishes {:?}", sys.key),
            ));
        }
    }

    // V10
    if let Some(cycle_at) = find_listen_cycle(form, &index) {
        out.push(Diagnostic::new(
            DiagCode::V10,
            ev(cycle_at),
            format!("listen graph has a cycle through {:?}", form.events[cycle_at].name),
        ));
    }

    out
}

/// Kahn's algorithm over listen edges; returns an event on a cycle, if any.
fn find_listen_cycle(form: &WorkflowForm, index: &HashMap<&str, usize>) -> Option<usize> {
    let n = form.events.len();
    let mut indegree = vec![0usize; n];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, e) in form.events.iter().enumerate() {
        for l in &e.listen {
            if let Some(&src) = index.get(l.as_str()) {
                children[src].push(i);
                indegree[i] += 1;
            }
        }
    }
    let mut queue: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut seen = 0;
    while let Some(i) = queue.pop() {
        seen += 1;
        for &c in &children[i] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                queue.push(c);
            }
        }
    }
    (seen < n).then(|| (0..n).find(|&i| indegree[i] > 0)).flatten()
}
