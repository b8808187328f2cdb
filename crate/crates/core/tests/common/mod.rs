#![allow(dead_code)]

use agentos::forms::{
    parse_agent_form, parse_workflow_form, ActionType, AgentForm, DiagCode, KeyDesc, StaticRegistry,
    WorkflowForm,
};

pub const SINGLE_FORM: &str = include_str!("../fixtures/single_form.xml");
pub const MULTI_FORM: &str = include_str!("../fixtures/multi_form.xml");
pub const WORKFLOW_FORM: &str = include_str!("../fixtures/workflow_form.xml");
pub const WIKI_WORKFLOW: &str = include_str!("../fixtures/wiki_workflow.xml");

/// Registry holding the pre-existing tools and agents the fixture forms refer to.
pub fn fixture_registry() -> StaticRegistry {
    StaticRegistry::new()
        .tool("visual_question_answering")
        .tool("save_raw_docs_to_vector_db")
        .tool("query_db")
        .agent("Web Surfer Agent")
}

fn event_mut<'a>(form: &'a mut WorkflowForm, name: &str) -> &'a mut agentos::forms::Event {
    form.events.iter_mut().find(|e| e.name == name).unwrap()
}

/// One mutant per workflow rule. Each starts from a valid fixture and breaks exactly one rule.
pub fn workflow_mutants() -> Vec<(DiagCode, WorkflowForm)> {
    let math = parse_workflow_form(WORKFLOW_FORM).unwrap();
    let wiki = parse_workflow_form(WIKI_WORKFLOW).unwrap();
    let mut out = Vec::new();

    let mut f = math.clone();
    f.name = "parallel math solver".into();
    out.push((DiagCode::V1, f));

    let mut f = math.clone();
    f.events[0].task = Some("do something".into());
    out.push((DiagCode::V2, f));

    let mut f = math.clone();
    event_mut(&mut f, "aggregate_solutions")
        .inputs
        .push(KeyDesc::new("tie_breaker", "produced by nobody"));
    out.push((DiagCode::V3, f));

    let mut f = math.clone();
    event_mut(&mut f, "solve_with_gpt4").agent = None;
    out.push((DiagCode::V4, f));

    let mut f = wiki.clone();
    event_mut(&mut f, "on_evaluate").outputs[1].action.value = Some("on_write".into());
    out.push((DiagCode::V5, f));

    let mut f = wiki.clone();
    event_mut(&mut f, "on_evaluate").outputs[1].action.kind = ActionType::Result;
    out.push((DiagCode::V6, f));

    let mut f = math.clone();
    f.system_output[0].key = "verdict".into();
    out.push((DiagCode::V7, f));

    let mut f = math.clone();
    event_mut(&mut f, "aggregate_solutions").agent.as_mut().unwrap().name = "Ghost Agent".into();
    out.push((DiagCode::V8, f));

    let mut f = math.clone();
    f.system_output.push(KeyDesc::new("gpt4_solution", "a second output"));
    out.push((DiagCode::V9, f));

    let mut f = math;
    event_mut(&mut f, "solve_with_gpt4")
        .listen
        .push("aggregate_solutions".into());
    out.push((DiagCode::V10, f));

    out
}

pub fn agent_mutants() -> Vec<(DiagCode, AgentForm)> {
    let single = parse_agent_form(SINGLE_FORM).unwrap();
    let multi = parse_agent_form(MULTI_FORM).unwrap();
    let mut out = Vec::new();

    let mut f = single.clone();
    f.agents[0].agent_output.push(KeyDesc::new("image_path", "where the image went"));
    out.push((DiagCode::A1, f));

    let mut f = single.clone();
    f.agents[0].instructions.push_str(" Address the user as {user_name}.");
    out.push((DiagCode::A2, f));

    let mut f = single.clone();
    f.agents[0].tools_existing[0].name = "image_captioner".into();
    out.push((DiagCode::A3, f));

    let mut f = multi;
    f.agents[1].name = f.agents[0].name.clone();
    out.push((DiagCode::A4, f));

    let mut f = single;
    f.agents[0].agent_output[0].key = "image_report".into();
    out.push((DiagCode::A5, f));

    out
}

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use agentos::engine::{
    render_call, BackendError, CompletionBackend, CompletionRequest, CompletionResponse, Engine, EngineMode,
    RetryPolicy, Step,
};
use agentos::kernel::AgentDefinition;
use agentos::message::ToolCall;
use agentos::registry::{Registry, ToolDefinition};

/// Counts requests before handing them to the wrapped backend.
pub struct Counting<B> {
    pub inner: B,
    pub calls: AtomicUsize,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<B: CompletionBackend> CompletionBackend for Counting<B> {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

pub fn transformed(backend: Arc<dyn CompletionBackend>) -> Engine {
    Engine::new(EngineMode::Transformed, backend).with_retry(RetryPolicy::immediate(1))
}

/// A transformed-mode reply that calls `name` with `args`.
pub fn call(name: &str, args: &[(&str, &str)]) -> Step {
    let mut c = ToolCall::new(name);
    for (k, v) in args {
        c = c.arg(*k, *v);
    }
    Step::text(render_call(&c))
}

pub fn out(key: &str, value: &str) -> Step {
    Step::text(format!("<output={key}>{value}</output>"))
}

/// An on-disk registry holding what the fixture forms treat as already existing.
pub fn seeded_registry(dir: &std::path::Path) -> Registry {
    let reg = Registry::open(dir).unwrap();
    for t in ["visual_question_answering", "save_raw_docs_to_vector_db", "query_db"] {
        reg.put_tool(&ToolDefinition::builtin(t, "echo").unwrap()).unwrap();
    }
    reg.put_agent(
        &AgentDefinition::new("Web Surfer Agent", "You look things up on the web.")
            .with_description("Searches the web."),
    )
    .unwrap();
    reg
}
