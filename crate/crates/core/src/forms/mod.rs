//! XML agent forms and workflow forms: parsing, validation, serialization and global
//! variable substitution.
//!
//! Element-by-element layout is documented in `docs/forms.md`.

pub mod globals;
pub mod validate;
mod xml;

use std::collections::HashSet;

use roxmltree::Node;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use globals::{placeholders, substitute_globals, GlobalVar, UnboundPlaceholder};
pub use validate::{
    validate_agent_form, validate_workflow_form, DiagCode, Diagnostic,
    RegistryView, StaticRegistry,
};

use xml::{elements, leaf_text, tag, Positions, XmlWriter};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormError {
    #[error("E_XML: {message} (line {line}, column {column})")]
    Xml {
        message: String,
        line: u32,
        column: u32,
    },
    #[error("E_SCHEMA at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("E_ACTION_TYPE at {path}: {value:?} is not one of RESULT, ABORT, GOTO")]
    ActionType { path: String, value: String },
}

impl FormError {
    pub(crate) fn schema(path: &str, message: impl Into<String>) -> Self {
        FormError::Schema {
            path: path.to_string(),
            message: message.into(),
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            FormError::Xml { .. } => "E_XML",
            FormError::Schema { .. } => "E_SCHEMA",
            FormError::ActionType { .. } => "E_ACTION_TYPE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyDesc {
    pub key: String,
    pub description: String,
}

impl KeyDesc {
    pub fn new(key: impl Into<String>, description: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDecl {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormAgent {
    pub name: String,
    pub description: String,
    pub instructions: String,
    pub tools_existing: Vec<ToolDecl>,
    pub tools_new: Vec<ToolDecl>,
    /// Exactly one pair in a valid form; more are kept so validation can report them.
    pub agent_input: Vec<KeyDesc>,
    pub agent_output: Vec<KeyDesc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentForm {
    pub system_input: String,
    pub system_output: Vec<KeyDesc>,
    pub global_variables: Vec<GlobalVar>,
    pub agents: Vec<FormAgent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentCategory {
    Existing,
    New,
}

impl AgentCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            AgentCategory::Existing => "existing",
            AgentCategory::New => "new",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowAgent {
    pub name: String,
    pub category: AgentCategory,
    pub description: String,
    pub tools: Vec<ToolDecl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionType {
    #[serde(rename = "RESULT")]
    Result,
    #[serde(rename = "ABORT")]
    Abort,
    #[serde(rename = "GOTO")]
    Goto,
}

impl ActionType {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionType::Result => "RESULT",
            ActionType::Abort => "ABORT",
            ActionType::Goto => "GOTO",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "RESULT" => Some(ActionType::Result),
            "ABORT" => Some(ActionType::Abort),
            "GOTO" => Some(ActionType::Goto),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputAction {
    pub kind: ActionType,
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub key: String,
    pub description: String,
    pub condition: Option<String>,
    pub action: OutputAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventAgent {
    pub name: String,
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub name: String,
    pub inputs: Vec<KeyDesc>,
    pub task: Option<String>,
    pub outputs: Vec<Output>,
    pub listen: Vec<String>,
    pub agent: Option<EventAgent>,
}

impl Event {
    pub fn is_start(&self) -> bool {
        self.name == ON_START
    }

    pub fn output(&self, key: &str) -> Option<&Output> {
        self.outputs.iter().find(|o| o.key == key)
    }
}

pub const ON_START: &str = "on_start";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowForm {
    pub name: String,
    pub system_input: Vec<KeyDesc>,
    pub system_output: Vec<KeyDesc>,
    pub agents: Vec<WorkflowAgent>,
    pub global_variables: Vec<GlobalVar>,
    pub events: Vec<Event>,
}

impl WorkflowForm {
    pub fn event(&self, name: &str) -> Option<&Event> {
        self.events.iter().find(|e| e.name == name)
    }

    pub fn event_index(&self, name: &str) -> Option<usize> {
        self.events.iter().position(|e| e.name == name)
    }

    pub fn event_path(index: usize) -> String {
        format!("/workflow/events/event[{}]", index + 1)
    }
}

/// Required/optional singleton bookkeeping while walking an element's children.
struct Slots {
    seen: HashSet<&'static str>,
    path: String,
}

impl Slots {
    fn new(path: &str) -> Self {
        Self {
            seen: HashSet::new(),
            path: path.to_string(),
        }
    }

    fn once(&mut self, name: &'static str) -> Result<String, FormError> {
        if !self.seen.insert(name) {
            return Err(FormError::schema(
                &format!("{}/{name}", self.path),
                "duplicate element",
            ));
        }
        Ok(format!("{}/{name}", self.path))
    }

    fn require(&self, names: &[&'static str]) -> Result<(), FormError> {
        for n in names {
            if !self.seen.contains(n) {
                return Err(FormError::schema(
                    &format!("{}/{n}", self.path),
                    "missing required element",
                ));
            }
        }
        Ok(())
    }
}

fn unknown(path: &str, node: &Node<'_, '_>) -> FormError {
    FormError::schema(&format!("{path}/{}", tag(node)), "unknown element")
}

/// `<key>..</key><description>..</description>` pairs; each `key` opens a new pair.
fn key_desc_pairs(node: Node<'_, '_>, path: &str) -> Result<Vec<KeyDesc>, FormError> {
    let mut pairs: Vec<(KeyDesc, bool)> = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        let cpath = pos.next(path, tag(&child));
        match tag(&child) {
            "key" => pairs.push((KeyDesc::new(leaf_text(child, &cpath)?, ""), false)),
            "description" => match pairs.last_mut() {
                Some((pair, has_desc @ false)) => {
                    pair.description = leaf_text(child, &cpath)?;
                    *has_desc = true;
                }
                _ => return Err(FormError::schema(&cpath, "description without a preceding key")),
            },
            _ => return Err(unknown(path, &child)),
        }
    }
    if let Some(i) = pairs.iter().position(|(_, has)| !has) {
        return Err(FormError::schema(&format!("{path}/key[{}]", i + 1), "key without description"));
    }
    Ok(pairs.into_iter().map(|(p, _)| p).collect())
}

/// `<input><key/><description/></input>` lists.
fn keyed_list(node: Node<'_, '_>, path: &str, item: &str) -> Result<Vec<KeyDesc>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != item {
            return Err(unknown(path, &child));
        }
        let ipath = pos.next(path, item);
        let mut pairs = key_desc_pairs(child, &ipath)?;
        if pairs.len() != 1 {
            return Err(FormError::schema(&ipath, "expected exactly one key and description"));
        }
        out.push(pairs.remove(0));
    }
    Ok(out)
}

fn parse_globals(node: Node<'_, '_>, path: &str) -> Result<Vec<GlobalVar>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != "variable" {
            return Err(unknown(path, &child));
        }
        let vpath = pos.next(path, "variable");
        let mut slots = Slots::new(&vpath);
        let (mut key, mut description, mut value) = (String::new(), String::new(), String::new());
        for f in elements(child, &vpath)? {
            match tag(&f) {
                "key" => key = leaf_text(f, &slots.once("key")?)?,
                "description" => description = leaf_text(f, &slots.once("description")?)?,
                "value" => value = leaf_text(f, &slots.once("value")?)?,
                _ => return Err(unknown(&vpath, &f)),
            }
        }
        slots.require(&["key", "value"])?;
        out.push(GlobalVar {
            key,
            description,
            value,
        });
    }
    Ok(out)
}

fn parse_tools(node: Node<'_, '_>, path: &str) -> Result<Vec<ToolDecl>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != "tool" {
            return Err(unknown(path, &child));
        }
        let tpath = pos.next(path, "tool");
        let mut slots = Slots::new(&tpath);
        let (mut name, mut description) = (String::new(), String::new());
        for f in elements(child, &tpath)? {
            match tag(&f) {
                "name" => name = leaf_text(f, &slots.once("name")?)?,
                "description" => description = leaf_text(f, &slots.once("description")?)?,
                _ => return Err(unknown(&tpath, &f)),
            }
        }
        slots.require(&["name"])?;
        out.push(ToolDecl { name, description });
    }
    Ok(out)
}

pub fn parse_agent_form(xml: &str) -> Result<AgentForm, FormError> {
    let doc = xml::parse_document(xml)?;
    let root = doc.root_element();
    if tag(&root) != "agents" {
        return Err(FormError::schema(
            &format!("/{}", tag(&root)),
            "expected root element <agents>",
        ));
    }
    let path = "/agents";
    let mut slots = Slots::new(path);
    let mut form = AgentForm {
        system_input: String::new(),
        system_output: Vec::new(),
        global_variables: Vec::new(),
        agents: Vec::new(),
    };
    let mut pos = Positions::default();
    for child in elements(root, path)? {
        match tag(&child) {
            "system_input" => form.system_input = leaf_text(child, &slots.once("system_input")?)?,
            "system_output" => {
                form.system_output = key_desc_pairs(child, &slots.once("system_output")?)?
            }
            "global_variables" => {
                form.global_variables = parse_globals(child, &slots.once("global_variables")?)?
            }
            "agent" => {
                let apath = pos.next(path, "agent");
                form.agents.push(parse_form_agent(child, &apath)?);
            }
            _ => return Err(unknown(path, &child)),
        }
    }
    slots.require(&["system_input", "system_output"])?;
    if form.agents.is_empty() {
        return Err(FormError::schema("/agents/agent", "missing required element"));
    }
    Ok(form)
}

fn parse_form_agent(node: Node<'_, '_>, path: &str) -> Result<FormAgent, FormError> {
    let mut slots = Slots::new(path);
    let mut agent = FormAgent {
        name: String::new(),
        description: String::new(),
        instructions: String::new(),
        tools_existing: Vec::new(),
        tools_new: Vec::new(),
        agent_input: Vec::new(),
        agent_output: Vec::new(),
    };
    for f in elements(node, path)? {
        match tag(&f) {
            "name" => agent.name = leaf_text(f, &slots.once("name")?)?,
            "description" => agent.description = leaf_text(f, &slots.once("description")?)?,
            "instructions" => agent.instructions = leaf_text(f, &slots.once("instructions")?)?,
            "agent_input" => agent.agent_input = key_desc_pairs(f, &slots.once("agent_input")?)?,
            "agent_output" => agent.agent_output = key_desc_pairs(f, &slots.once("agent_output")?)?,
            "tools" => {
                let category = f.attribute("category").unwrap_or("");
                let (slot, tpath) = match category {
                    "existing" => ("tools_existing", format!("{path}/tools[@category=\"existing\"]")),
                    "new" => ("tools_new", format!("{path}/tools[@category=\"new\"]")),
                    _ => {
                        return Err(FormError::schema(
                            &format!("{path}/tools"),
                            format!("category must be \"existing\" or \"new\", found {category:?}"),
                        ))
                    }
                };
                if !slots.seen.insert(slot) {
                    return Err(FormError::schema(&tpath, "duplicate element"));
                }
                let tools = parse_tools(f, &tpath)?;
                if category == "existing" {
                    agent.tools_existing = tools;
                } else {
                    agent.tools_new = tools;
                }
            }
            _ => return Err(unknown(path, &f)),
        }
    }
    slots.require(&["name", "description", "instructions", "agent_input", "agent_output"])?;
    Ok(agent)
}

pub fn parse_workflow_form(xml: &str) -> Result<WorkflowForm, FormError> {
    let doc = xml::parse_document(xml)?;
    let root = doc.root_element();
    if tag(&root) != "workflow" {
        return Err(FormError::schema(
            &format!("/{}", tag(&root)),
            "expected root element <workflow>",
        ));
    }
    let path = "/workflow";
    let mut slots = Slots::new(path);
    let mut form = WorkflowForm {
        name: String::new(),
        system_input: Vec::new(),
        system_output: Vec::new(),
        agents: Vec::new(),
        global_variables: Vec::new(),
        events: Vec::new(),
    };
    for child in elements(root, path)? {
        match tag(&child) {
            "name" => form.name = leaf_text(child, &slots.once("name")?)?,
            "system_input" => form.system_input = key_desc_pairs(child, &slots.once("system_input")?)?,
            "system_output" => {
                form.system_output = key_desc_pairs(child, &slots.once("system_output")?)?
            }
            "agents" => form.agents = parse_workflow_agents(child, &slots.once("agents")?)?,
            "global_variables" => {
                form.global_variables = parse_globals(child, &slots.once("global_variables")?)?
            }
            "events" => form.events = parse_events(child, &slots.once("events")?)?,
            _ => return Err(unknown(path, &child)),
        }
    }
    slots.require(&["name", "system_input", "system_output", "events"])?;
    Ok(form)
}

fn parse_workflow_agents(node: Node<'_, '_>, path: &str) -> Result<Vec<WorkflowAgent>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != "agent" {
            return Err(unknown(path, &child));
        }
        let apath = pos.next(path, "agent");
        let category = match child.attribute("category") {
            Some("existing") => AgentCategory::Existing,
            Some("new") => AgentCategory::New,
            other => {
                return Err(FormError::schema(
                    &apath,
                    format!("category must be \"existing\" or \"new\", found {other:?}"),
                ))
            }
        };
        let mut slots = Slots::new(&apath);
        let mut agent = WorkflowAgent {
            name: String::new(),
            category,
            description: String::new(),
            tools: Vec::new(),
        };
        for f in elements(child, &apath)? {
            match tag(&f) {
                "name" => agent.name = leaf_text(f, &slots.once("name")?)?,
                "description" => agent.description = leaf_text(f, &slots.once("description")?)?,
                "tools" => agent.tools = parse_tools(f, &slots.once("tools")?)?,
                _ => return Err(unknown(&apath, &f)),
            }
        }
        slots.require(&["name"])?;
        out.push(agent);
    }
    Ok(out)
}

fn parse_events(node: Node<'_, '_>, path: &str) -> Result<Vec<Event>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != "event" {
            return Err(unknown(path, &child));
        }
        let epath = pos.next(path, "event");
        out.push(parse_event(child, &epath)?);
    }
    Ok(out)
}

fn parse_event(node: Node<'_, '_>, path: &str) -> Result<Event, FormError> {
    let mut slots = Slots::new(path);
    let mut event = Event {
        name: String::new(),
        inputs: Vec::new(),
        task: None,
        outputs: Vec::new(),
        listen: Vec::new(),
        agent: None,
    };
    for f in elements(node, path)? {
        match tag(&f) {
            "name" => event.name = leaf_text(f, &slots.once("name")?)?,
            "inputs" => event.inputs = keyed_list(f, &slots.once("inputs")?, "input")?,
            "task" => event.task = Some(leaf_text(f, &slots.once("task")?)?),
            "outputs" => event.outputs = parse_outputs(f, &slots.once("outputs")?)?,
            "listen" => {
                let lpath = slots.once("listen")?;
                let mut lpos = Positions::default();
                for e in elements(f, &lpath)? {
                    if tag(&e) != "event" {
                        return Err(unknown(&lpath, &e));
                    }
                    event.listen.push(leaf_text(e, &lpos.next(&lpath, "event"))?);
                }
            }
            "agent" => {
                let apath = slots.once("agent")?;
                let mut aslots = Slots::new(&apath);
                let mut agent = EventAgent {
                    name: String::new(),
                    model: None,
                };
                for a in elements(f, &apath)? {
                    match tag(&a) {
                        "name" => agent.name = leaf_text(a, &aslots.once("name")?)?,
                        "model" => agent.model = Some(leaf_text(a, &aslots.once("model")?)?),
                        _ => return Err(unknown(&apath, &a)),
                    }
                }
                aslots.require(&["name"])?;
                event.agent = Some(agent);
            }
            _ => return Err(unknown(path, &f)),
        }
    }
    slots.require(&["name", "outputs"])?;
    Ok(event)
}

fn parse_outputs(node: Node<'_, '_>, path: &str) -> Result<Vec<Output>, FormError> {
    let mut out = Vec::new();
    let mut pos = Positions::default();
    for child in elements(node, path)? {
        if tag(&child) != "output" {
            return Err(unknown(path, &child));
        }
        let opath = pos.next(path, "output");
        let mut slots = Slots::new(&opath);
        let (mut key, mut description, mut condition, mut action) =
            (String::new(), String::new(), None, None);
        for f in elements(child, &opath)? {
            match tag(&f) {
                "key" => key = leaf_text(f, &slots.once("key")?)?,
                "description" => description = leaf_text(f, &slots.once("description")?)?,
                "condition" => condition = Some(leaf_text(f, &slots.once("condition")?)?),
                "action" => action = Some(parse_action(f, &slots.once("action")?)?),
                _ => return Err(unknown(&opath, &f)),
            }
        }
        slots.require(&["key", "action"])?;
        out.push(Output {
            key,
            description,
            condition,
            action: action.expect("required above"),
        });
    }
    Ok(out)
}

fn parse_action(node: Node<'_, '_>, path: &str) -> Result<OutputAction, FormError> {
    let mut slots = Slots::new(path);
    let (mut kind, mut value) = (None, None);
    for f in elements(node, path)? {
        match tag(&f) {
            "type" => {
                let tpath = slots.once("type")?;
                let raw = leaf_text(f, &tpath)?;
                kind = Some(ActionType::parse(&raw).ok_or(FormError::ActionType {
                    path: tpath,
                    value: raw,
                })?);
            }
            "value" => {
                let v = leaf_text(f, &slots.once("value")?)?;
                value = (!v.is_empty()).then_some(v);
            }
            _ => return Err(unknown(path, &f)),
        }
    }
    slots.require(&["type"])?;
    Ok(OutputAction {
        kind: kind.expect("required above"),
        value,
    })
}

fn write_pairs(w: &mut XmlWriter, pairs: &[KeyDesc]) {
    for p in pairs {
        w.leaf("key", &p.key);
        w.leaf("description", &p.description);
    }
}

fn write_globals(w: &mut XmlWriter, globals: &[GlobalVar]) {
    if globals.is_empty() {
        return;
    }
    w.open("global_variables");
    for g in globals {
        w.open("variable");
        w.leaf("key", &g.key);
        w.leaf("description", &g.description);
        w.leaf("value", &g.value);
        w.close("variable");
    }
    w.close("global_variables");
}

fn write_tools(w: &mut XmlWriter, category: Option<&str>, tools: &[ToolDecl]) {
    w.open_attr("tools", category.map(|c| ("category", c)));
    for t in tools {
        w.open("tool");
        w.leaf("name", &t.name);
        w.leaf("description", &t.description);
        w.close("tool");
    }
    w.close("tools");
}

impl AgentForm {
    /// Canonical XML; parsing it yields a structurally equal form.
    pub fn to_xml(&self) -> String {
        let mut w = XmlWriter::new();
        w.open("agents");
        w.leaf("system_input", &self.system_input);
        w.open("system_output");
        write_pairs(&mut w, &self.system_output);
        w.close("system_output");
        write_globals(&mut w, &self.global_variables);
        for a in &self.agents {
            w.open("agent");
            w.leaf("name", &a.name);
            w.leaf("description", &a.description);
            w.leaf("instructions", &a.instructions);
            if !a.tools_existing.is_empty() {
                write_tools(&mut w, Some("existing"), &a.tools_existing);
            }
            if !a.tools_new.is_empty() {
                write_tools(&mut w, Some("new"), &a.tools_new);
            }
            w.open("agent_input");
            write_pairs(&mut w, &a.agent_input);
            w.close("agent_input");
            w.open("agent_output");
            write_pairs(&mut w, &a.agent_output);
            w.close("agent_output");
            w.close("agent");
        }
        w.close("agents");
        w.finish()
    }
}

impl WorkflowForm {
    /// Canonical XML; parsing it yields a structurally equal form.
    pub fn to_xml(&self) -> String {
        let mut w = XmlWriter::new();
        w.open("workflow");
        w.leaf("name", &self.name);
        w.open("system_input");
        write_pairs(&mut w, &self.system_input);
        w.close("system_input");
        w.open("system_output");
        write_pairs(&mut w, &self.system_output);
        w.close("system_output");
        w.open("agents");
        for a in &self.agents {
            w.open_attr("agent", Some(("category", a.category.as_str())));
            w.leaf("name", &a.name);
            w.leaf("description", &a.description);
            if !a.tools.is_empty() {
                write_tools(&mut w, None, &a.tools);
            }
            w.close("agent");
        }
        w.close("agents");
        write_globals(&mut w, &self.global_variables);
        w.open("events");
        for e in &self.events {
            w.open("event");
            w.leaf("name", &e.name);
            if !e.inputs.is_empty() {
                w.open("inputs");
                for i in &e.inputs {
                    w.open("input");
                    w.leaf("key", &i.key);
                    w.leaf("description", &i.description);
                    w.close("input");
                }
                w.close("inputs");
            }
            if let Some(task) = &e.task {
                w.leaf("task", task);
            }
            w.open("outputs");
            for o in &e.outputs {
                w.open("output");
                w.leaf("key", &o.key);
                w.leaf("description", &o.description);
                if let Some(c) = &o.condition {
                    w.leaf("condition", c);
                }
                w.open("action");
                w.leaf("type", o.action.kind.as_str());
                if let Some(v) = &o.action.value {
                    w.leaf("value", v);
                }
                w.close("action");
                w.close("output");
            }
            w.close("outputs");
            if !e.listen.is_empty() {
                w.open("listen");
                for l in &e.listen {
                    w.leaf("event", l);
                }
                w.close("listen");
            }
            if let Some(a) = &e.agent {
                w.open("agent");
                w.leaf("name", &a.name);
                if let Some(m) = &a.model {
                    w.leaf("model", m);
                }
                w.close("agent");
            }
            w.close("event");
        }
        w.close("events");
        w.close("workflow");
        w.finish()
    }
}

/// Pulls the first `<root>...</root>` block out of free-form model output.
pub fn extract_form_text<'a>(text: &'a str, root: &str) -> Option<&'a str> {
    let open = format!("<{root}>");
    let close = format!("</{root}>");
    let start = text.find(&open)?;
    let end = text.rfind(&close)? + close.len();
    (end > start).then(|| &text[start..end])
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI_WORKFLOW: &str = r#"<workflow>
  <name>mini</name>
  <system_input><key>q</key><description>question</description></system_input>
  <system_output><key>a</key><description>answer</description></system_output>
  <agents><agent category="new"><name>Solver</name><description>solves</description></agent></agents>
  <events>
    <event><name>on_start</name>
      <inputs><input><key>q</key><description>question</description></input></inputs>
      <outputs><output><key>q</key><description>question</description><action><type>RESULT</type></action></output></outputs>
    </event>
    <event><name>solve</name>
      <inputs><input><key>q</key><description>question</description></input></inputs>
      <task>Answer &amp; explain.</task>
      <outputs><output><key>a</key><description>answer</description><action><type>RESULT</type></action></output></outputs>
      <listen><event>on_start</event></listen>
      <agent><name>Solver</name><model>m1</model></agent>
    </event>
  </events>
</workflow>"#;

    #[test]
    fn parses_minimal_workflow_and_roundtrips() {
        let f = parse_workflow_form(MINI_WORKFLOW).unwrap();
        assert_eq!(f.events.len(), 2);
        assert_eq!(f.events[1].task.as_deref(), Some("Answer & explain."));
        assert_eq!(f.events[1].agent.as_ref().unwrap().model.as_deref(), Some("m1"));
        let again = parse_workflow_form(&f.to_xml()).unwrap();
        assert_eq!(f, again);
    }

    #[test]
    fn rejects_unknown_action_type() {
        let bad = MINI_WORKFLOW.replacen("<type>RESULT</type></action></output></outputs>\n      <listen>", "<type>RETRY</type></action></output></outputs>\n      <listen>", 1);
        let err = parse_workflow_form(&bad).unwrap_err();
        assert_eq!(err.code(), "E_ACTION_TYPE");
        let lower = MINI_WORKFLOW.replacen("<type>RESULT</type>", "<type>result</type>", 1);
        assert_eq!(parse_workflow_form(&lower).unwrap_err().code(), "E_ACTION_TYPE");
    }

    #[test]
    fn schema_errors() {
        assert_eq!(
            parse_agent_form("<agent><name>x</name></agent>").unwrap_err().code(),
            "E_SCHEMA"
        );
        assert_eq!(parse_workflow_form("<workflow><bogus/></workflow>").unwrap_err().code(), "E_SCHEMA");
        let dup = MINI_WORKFLOW.replacen("<name>mini</name>", "<name>mini</name><name>again</name>", 1);
        match parse_workflow_form(&dup).unwrap_err() {
            FormError::Schema { path, .. } => assert_eq!(path, "/workflow/name"),
            other => panic!("{other:?}"),
        }
        assert_eq!(parse_workflow_form("<workflow>").unwrap_err().code(), "E_XML");
    }

    #[test]
    fn refuses_dtd_entities() {
        let xml = r#"<!DOCTYPE workflow [<!ENTITY x "boom">]><workflow><name>&x;</name></workflow>"#;
        assert_eq!(parse_workflow_form(xml).unwrap_err().code(), "E_XML");
    }

    #[test]
    fn multiple_pairs_are_kept_for_validation() {
        let xml = r#"<agents><system_input>x</system_input>
            <system_output><key>a</key><description>d</description><key>b</key><description>e</description></system_output>
            <agent><name>A</name><description>d</description><instructions>i</instructions>
            <agent_input><key>q</key><description>d</description></agent_input>
            <agent_output><key>a</key><description>d</description></agent_output></agent></agents>"#;
        let f = parse_agent_form(xml).unwrap();
        assert_eq!(f.system_output.len(), 2);
    }

    #[test]
    fn extracts_block_from_prose() {
        let text = "Here you go:\n```xml\n<workflow><name>x</name></workflow>\n```";
        assert_eq!(extract_form_text(text, "workflow"), Some("<workflow><name>x</name></workflow>"));
        assert_eq!(extract_form_text("nothing", "workflow"), None);
    }
}
