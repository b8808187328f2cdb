//! The `agentos` command line: form validation, workflow and agent runs, the creation
//! pipelines, registry and RAG management, and an interactive session.
//!
//! Exit codes: 0 success, 1 the operation failed, 2 the command line or configuration
//! was unusable.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use agentos::creation::{
    run_agent_creation_pipeline, run_entry_agent, run_workflow_creation_pipeline, PipelineConfig, PipelineOutcome,
};
use agentos::engine::{BackendError, Engine, EngineMode};
use agentos::forms::{parse_agent_form, parse_workflow_form, validate_agent_form, validate_workflow_form};
use agentos::kernel::HandoffLimits;
use agentos::rag::{rag_answer_loop, HashingEmbedder, RagLimits, RagTools, RagVerdict, VectorStore};
use agentos::registry::{ItemKind, ProcessRunner, Registry, ToolRunnerHandle, ToolSet, WorkflowDefinition};
use agentos::trace::{Trace, TraceRecord};
use agentos::workflow::{run_workflow, Parallelism, RunLimits, RunTerminal, WorkflowEnv};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

pub use config::{CassetteSetting, CliConfig};

#[derive(Debug, Parser)]
#[command(name = "agentos", version, about = "Build and run LLM agents and workflows from XML forms")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML file with api_base, api_key, model, mode, registry_root, rag_root, cassette, cassette_mode.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// State directory holding registry/, rag/ and session.jsonl unless overridden.
    #[arg(long, global = true)]
    pub home: Option<PathBuf>,
    #[arg(long, global = true)]
    pub registry: Option<PathBuf>,
    #[arg(long, global = true)]
    pub rag: Option<PathBuf>,
    /// Directory the file primitives and script runners may touch.
    #[arg(long, global = true)]
    pub workspace: Option<PathBuf>,
    /// Script runner for script-bodied tools, as ID=PROGRAM (repeatable).
    #[arg(long = "runner", global = true, value_name = "ID=PROGRAM")]
    pub runners: Vec<String>,
    #[arg(long, global = true)]
    pub api_base: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// How tools are offered to the model: direct (native tool calls) or transformed (XML in text).
    #[arg(long, global = true)]
    pub mode: Option<EngineMode>,
    #[arg(long, global = true)]
    pub cassette: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub cassette_mode: Option<CassetteSetting>,
    /// JSON script of backend replies to use instead of a live endpoint.
    #[arg(long, global = true)]
    pub script: Option<PathBuf>,
    /// Write the run trace (JSON lines) here.
    #[arg(long, global = true)]
    pub trace: Option<PathBuf>,
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and validate an agent or workflow form.
    Validate { form: PathBuf },
    /// Run a workflow, given as a form file or a registered workflow name.
    RunWorkflow {
        workflow: String,
        #[arg(long)]
        input: String,
        /// Dispatch independent events concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Run a registered agent on a task.
    RunAgent {
        name: String,
        #[arg(long)]
        task: String,
    },
    /// Create tools and agents from natural-language requirements.
    CreateAgents(CreateArgs),
    /// Create a workflow from natural-language requirements.
    CreateWorkflow(CreateArgs),
    #[command(subcommand)]
    Registry(RegistryCommand),
    #[command(subcommand)]
    Rag(RagCommand),
    /// Interactive session: each line is submitted as requirements.
    Repl,
}

#[derive(Debug, Args)]
struct CreateArgs {
    #[arg(long)]
    requirements: String,
    /// Optional task the created artifact must complete before it is accepted.
    #[arg(long)]
    task: Option<String>,
    #[arg(long, default_value_t = agentos::creation::DEFAULT_MAX_ATTEMPTS)]
    max_attempts: u32,
}

#[derive(Debug, Subcommand)]
enum RegistryCommand {
    List { kind: Option<ItemKind> },
    Show { kind: ItemKind, name: String },
    Delete { kind: ItemKind, name: String },
}

#[derive(Debug, Subcommand)]
enum RagCommand {
    /// Ingest a .txt/.md file, a directory, or a zip archive.
    Add {
        path: PathBuf,
        #[arg(long, default_value = "documents")]
        collection: String,
        #[arg(long, default_value_t = agentos::rag::DEFAULT_CHUNK_SIZE)]
        chunk_size: usize,
    },
    Query {
        text: String,
        #[arg(long, default_value = "documents")]
        collection: String,
        #[arg(short, default_value_t = agentos::rag::DEFAULT_TOP_K)]
        k: usize,
    },
    /// Answer a question from a collection, rewriting the query when retrieval falls short.
    Ask {
        text: String,
        #[arg(long, default_value = "documents")]
        collection: String,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Failed { code: String, message: String },
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    pub fn failed(code: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Failed {
            code: code.into(),
            message: message.into(),
        }
    }

    fn backend(e: BackendError) -> Self {
        Self::failed(e.code(), e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed { .. } => 1,
        }
    }
}

macro_rules! fail_with_code {
    ($e:expr) => {{
        let e = $e;
        CliError::failed(e.code(), e.to_string())
    }};
}

/// What a command produced: plain lines, the same facts as JSON, and whether it succeeded.
struct Output {
    lines: Vec<String>,
    json: Value,
    ok: bool,
    trace: Option<Trace>,
}

impl Output {
    fn ok(lines: Vec<String>, json: Value) -> Self {
        Self {
            lines,
            json,
            ok: true,
            trace: None,
        }
    }
}

struct Ctx {
    cfg: CliConfig,
    global: GlobalArgs,
}

impl Ctx {
    fn workspace(&self) -> PathBuf {
        self.global.workspace.clone().unwrap_or_else(|| self.home().join("workspace"))
    }

    fn home(&self) -> PathBuf {
        self.global.home.clone().unwrap_or_else(|| PathBuf::from(config::DEFAULT_HOME))
    }

    fn registry(&self) -> Result<Registry, CliError> {
        let workspace = self.workspace();
        let mut handle = ToolRunnerHandle::new().with_workspace(&workspace);
        for spec in &self.global.runners {
            let (id, program) = spec
                .split_once('=')
                .filter(|(id, p)| !id.is_empty() && !p.is_empty())
                .ok_or_else(|| CliError::usage(format!("--runner {spec:?} is not ID=PROGRAM")))?;
            let mut words = program.split_whitespace().map(str::to_string);
            let runner = ProcessRunner {
                program: words.next().unwrap_or_default(),
                args: words.collect(),
                workdir: workspace.clone(),
            };
            handle = handle.with_runner(id, Arc::new(runner));
        }
        Ok(Registry::open(&self.cfg.registry_root)
            .map_err(|e| fail_with_code!(e))?
            .with_runner(handle))
    }

    fn store(&self) -> Result<VectorStore, CliError> {
        VectorStore::open(&self.cfg.rag_root).map_err(|e| fail_with_code!(e))
    }
}

/// Entry point used by the binary: environment variables come from the process.
pub fn dispatch(argv: &[String], stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let env: BTreeMap<String, String> = std::env::vars().filter(|(k, _)| k.starts_with("AGENT_")).collect();
    run(argv, &env, stdin, out, err)
}

/// Like [`dispatch`] with an explicit environment.
pub fn run(
    argv: &[String],
    env: &BTreeMap<String, String>,
    stdin: &mut dyn BufRead,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(err, "{}", e.render());
                return 2;
            }
            let _ = write!(out, "{}", e.render());
            return 0;
        }
    };
    let ctx = match CliConfig::resolve(&cli.global, env) {
        Ok(cfg) => Ctx {
            cfg,
            global: cli.global,
        },
        Err(e) => return report_error(&e, cli.global.json, out, err),
    };
    let result = match cli.command {
        Command::Validate { form } => validate(&ctx, &form),
        Command::RunWorkflow {
            workflow,
            input,
            parallel,
        } => run_workflow_cmd(&ctx, &workflow, &input, parallel),
        Command::RunAgent { name, task } => run_agent_cmd(&ctx, &name, &task),
        Command::CreateAgents(a) => create(&ctx, PipelineKind::Agents, &a.requirements, a.task.as_deref(), a.max_attempts),
        Command::CreateWorkflow(a) => {
            create(&ctx, PipelineKind::Workflow, &a.requirements, a.task.as_deref(), a.max_attempts)
        }
        Command::Registry(c) => registry_cmd(&ctx, c),
        Command::Rag(c) => rag_cmd(&ctx, c),
        Command::Repl => return repl(&ctx, stdin, out, err),
    };
    match result {
        Ok(output) => {
            if let (Some(path), Some(trace)) = (&ctx.global.trace, &output.trace) {
                if let Err(e) = trace.save(path) {
                    return report_error(
                        &CliError::failed("E_IO", format!("trace {}: {e}", path.display())),
                        ctx.global.json,
                        out,
                        err,
                    );
                }
            }
            let _ = if ctx.global.json {
                writeln!(out, "{}", output.json)
            } else {
                output.lines.iter().try_for_each(|l| writeln!(out, "{l}"))
            };
            if output.ok {
                0
            } else {
                1
            }
        }
        Err(e) => report_error(&e, ctx.global.json, out, err),
    }
}

fn report_error(e: &CliError, json: bool, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let _ = match (e, json) {
        (CliError::Failed { code, message }, true) => {
            writeln!(out, "{}", json!({"ok": false, "error": {"code": code, "message": message}}))
        }
        (CliError::Failed { code, message }, false) => writeln!(err, "error: {}", coded(code, message)),
        (CliError::Usage(m), _) => writeln!(err, "usage error: {m}"),
    };
    e.exit_code()
}

/// `CODE: message`, unless the message already starts with its code.
fn coded(code: &str, message: &str) -> String {
    if message.starts_with(code) {
        message.to_string()
    } else {
        format!("{code}: {message}")
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::failed("E_IO", format!("{}: {e}", path.display())))
}

/// Name of the document element, skipping the XML declaration, comments and doctype.
fn root_element(xml: &str) -> Option<&str> {
    let mut rest = xml;
    loop {
        rest = &rest[rest.find('<')?..];
        if let Some(r) = rest.strip_prefix("<!--") {
            rest = &r[r.find("-->")? + 3..];
        } else if rest.starts_with("<?") || rest.starts_with("<!") {
            rest = &rest[rest.find('>')? + 1..];
        } else {
            let name = &rest[1..];
            let end = name
                .find(|c: char| c.is_whitespace() || c == '>' || c == '/')
                .unwrap_or(name.len());
            return Some(&name[..end]);
        }
    }
}

fn validate(ctx: &Ctx, path: &Path) -> Result<Output, CliError> {
    let xml = read_file(path)?;
    let registry = ctx.registry()?;
    let (kind, diags) = match root_element(&xml) {
        Some("workflow") => {
            let form = parse_workflow_form(&xml).map_err(|e| fail_with_code!(e))?;
            ("workflow", validate_workflow_form(&form, &registry))
        }
        Some("agents") => {
            let form = parse_agent_form(&xml).map_err(|e| fail_with_code!(e))?;
            ("agents", validate_agent_form(&form, &registry))
        }
        other => {
            return Err(CliError::failed(
                "E_PARSE",
                format!("expected an <agents> or <workflow> document, found {other:?}"),
            ))
        }
    };
    let mut lines: Vec<String> = diags.iter().map(ToString::to_string).collect();
    lines.push(format!("{} diagnostics", diags.len()));
    Ok(Output {
        json: json!({"ok": diags.is_empty(), "kind": kind, "diagnostics": diags}),
        ok: diags.is_empty(),
        lines,
        trace: None,
    })
}

fn load_workflow(registry: &Registry, spec: &str) -> Result<agentos::forms::WorkflowForm, CliError> {
    let path = Path::new(spec);
    if path.is_file() {
        let form = parse_workflow_form(&read_file(path)?).map_err(|e| fail_with_code!(e))?;
        let diags = validate_workflow_form(&form, registry);
        if let Some(first) = diags.first() {
            return Err(CliError::failed(
                first.code.as_str(),
                format!("the form does not validate ({} diagnostic(s)); first: {first}", diags.len()),
            ));
        }
        Ok(form)
    } else {
        let def: WorkflowDefinition = registry.get_workflow(spec).map_err(|e| fail_with_code!(e))?;
        def.parse().map_err(|e| fail_with_code!(e))
    }
}

fn run_workflow_cmd(ctx: &Ctx, spec: &str, input: &str, parallel: bool) -> Result<Output, CliError> {
    let registry = ctx.registry()?;
    let form = load_workflow(&registry, spec)?;
    let engine = ctx.cfg.engine()?;
    let store = ctx.store()?;
    let embedder = HashingEmbedder::default();
    let rag = RagTools::new(&store, &embedder, ctx.workspace());
    let tools = ToolSet::new().with(&registry).with(&rag);
    let env = WorkflowEnv {
        engine: &engine,
        tools: &tools,
        agents: &registry,
    };
    let parallelism = if parallel { Parallelism::Concurrent } else { Parallelism::Serial };
    let run = run_workflow(&form, input, &env, RunLimits::default(), parallelism).map_err(|e| fail_with_code!(e))?;
    let (lines, json, ok) = match &run.terminal {
        RunTerminal::Completed { value } => (
            vec![value.clone()],
            json!({"ok": true, "workflow": form.name, "value": value}),
            true,
        ),
        other => {
            let code = other.code().unwrap_or("E_ABORTED");
            let reason = other.value().unwrap_or_default();
            (
                vec![format!("aborted: {code}: {reason}")],
                json!({"ok": false, "workflow": form.name, "error": {"code": code, "message": reason}}),
                false,
            )
        }
    };
    Ok(Output {
        lines,
        json,
        ok,
        trace: Some(run.trace),
    })
}

fn run_agent_cmd(ctx: &Ctx, name: &str, task: &str) -> Result<Output, CliError> {
    let registry = ctx.registry()?;
    let agent = registry.get_agent(name).map_err(|e| fail_with_code!(e))?;
    let engine = ctx.cfg.engine()?;
    match run_entry_agent(&registry, &engine, &agent, task, HandoffLimits::default()) {
        Ok(text) => Ok(Output::ok(vec![text.clone()], json!({"ok": true, "agent": name, "answer": text}))),
        Err((code, message)) => Err(CliError::failed(code, message)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PipelineKind {
    Agents,
    Workflow,
}

impl PipelineKind {
    fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Agents => "agents",
            PipelineKind::Workflow => "workflow",
        }
    }
}

fn run_pipeline(
    registry: &Registry,
    engine: Engine,
    kind: PipelineKind,
    requirements: &str,
    task: Option<&str>,
    max_attempts: u32,
) -> Result<PipelineOutcome, CliError> {
    let config = PipelineConfig::new(engine).with_max_attempts(max_attempts);
    match kind {
        PipelineKind::Agents => run_agent_creation_pipeline(requirements, registry, task, &config),
        PipelineKind::Workflow => run_workflow_creation_pipeline(requirements, registry, task, &config),
    }
    .map_err(|e| fail_with_code!(e))
}

fn outcome_output(outcome: PipelineOutcome) -> Output {
    let mut lines = vec![format!("phase: {}", outcome.phase_reached)];
    for a in &outcome.artifacts {
        lines.push(format!("created {} {}", a.kind, a.name));
    }
    if !outcome.diagnostics_history.is_empty() {
        lines.push(format!("rejected forms: {}", outcome.diagnostics_history.len()));
    }
    if let Some(result) = &outcome.result {
        lines.push(format!("result: {result}"));
    }
    let calls: Vec<String> = outcome.invocations.iter().map(|(k, v)| format!("{k} x{v}")).collect();
    lines.push(format!("system agents: {}", calls.join(", ")));
    if let Some(e) = &outcome.error {
        lines.push(format!("error: {}", coded(e.code(), &e.to_string())));
    }
    let artifacts: Vec<Value> = outcome
        .artifacts
        .iter()
        .map(|a| json!({"kind": a.kind.as_str(), "name": a.name}))
        .collect();
    let json = json!({
        "ok": outcome.success,
        "phase": outcome.phase_reached.as_str(),
        "artifacts": artifacts,
        "result": outcome.result,
        "rejected_forms": outcome.diagnostics_history,
        "invocations": outcome.invocations,
        "error": outcome.error.as_ref().map(|e| json!({"code": e.code(), "message": e.to_string()})),
    });
    Output {
        lines,
        json,
        ok: outcome.success,
        trace: Some(outcome.trace),
    }
}

fn create(
    ctx: &Ctx,
    kind: PipelineKind,
    requirements: &str,
    task: Option<&str>,
    max_attempts: u32,
) -> Result<Output, CliError> {
    let registry = ctx.registry()?;
    let engine = ctx.cfg.engine()?;
    Ok(outcome_output(run_pipeline(&registry, engine, kind, requirements, task, max_attempts)?))
}

fn registry_cmd(ctx: &Ctx, cmd: RegistryCommand) -> Result<Output, CliError> {
    let registry = ctx.registry()?;
    match cmd {
        RegistryCommand::List { kind } => {
            let kinds = kind.map(|k| vec![k]).unwrap_or_else(|| ItemKind::ALL.to_vec());
            let mut lines = Vec::new();
            let mut items = Vec::new();
            for k in kinds {
                for name in registry.list(k).map_err(|e| fail_with_code!(e))? {
                    lines.push(format!("{k}\t{name}"));
                    items.push(json!({"kind": k.as_str(), "name": name}));
                }
            }
            Ok(Output::ok(lines, json!({"ok": true, "items": items})))
        }
        RegistryCommand::Show { kind, name } => {
            if !registry.contains(kind, &name) {
                return Err(CliError::failed("E_NOT_FOUND", format!("no {kind} named {name:?}")));
            }
            let text = read_file(&registry.item_path(kind, &name))?;
            let lines = vec![text.trim_end().to_string()];
            Ok(Output::ok(lines, json!({"ok": true, "kind": kind.as_str(), "name": name, "definition": text})))
        }
        RegistryCommand::Delete { kind, name } => {
            registry.delete(kind, &name).map_err(|e| fail_with_code!(e))?;
            Ok(Output::ok(
                vec![format!("deleted {kind} {name}")],
                json!({"ok": true, "deleted": {"kind": kind.as_str(), "name": name}}),
            ))
        }
    }
}

fn rag_cmd(ctx: &Ctx, cmd: RagCommand) -> Result<Output, CliError> {
    let store = ctx.store()?;
    let embedder = HashingEmbedder::default();
    match cmd {
        RagCommand::Add {
            path,
            collection,
            chunk_size,
        } => {
            if chunk_size == 0 {
                return Err(CliError::usage("--chunk-size must be at least 1"));
            }
            let r = store
                .ingest(&path, &collection, chunk_size, &embedder)
                .map_err(|e| fail_with_code!(e))?;
            Ok(Output::ok(
                vec![format!(
                    "collection {collection}: {} chunk(s) from {} file(s); {} file(s) skipped",
                    r.chunks_written, r.files_ingested, r.files_skipped
                )],
                json!({"ok": true, "collection": collection, "report": r}),
            ))
        }
        RagCommand::Query { text, collection, k } => {
            let hits = store
                .query(&collection, &text, k, &embedder)
                .map_err(|e| fail_with_code!(e))?;
            let mut lines = Vec::new();
            let mut items = Vec::new();
            for (i, h) in hits.iter().enumerate() {
                lines.push(format!("[{}] {}#{} {:.4}", i + 1, h.chunk.doc_id, h.chunk.ordinal, h.score));
                lines.push(format!("    {}", h.chunk.text));
                items.push(json!({
                    "doc_id": h.chunk.doc_id,
                    "ordinal": h.chunk.ordinal,
                    "score": h.score,
                    "text": h.chunk.text,
                }));
            }
            Ok(Output::ok(lines, json!({"ok": true, "collection": collection, "hits": items})))
        }
        RagCommand::Ask { text, collection } => {
            let coll = store.load(&collection).map_err(|e| fail_with_code!(e))?;
            let engine = ctx.cfg.engine()?;
            let answer = rag_answer_loop(&text, &coll, &embedder, &engine, RagLimits::default())
                .map_err(|e| fail_with_code!(e))?;
            let (line, ok, verdict) = match &answer.verdict {
                RagVerdict::Answer(a) => (a.clone(), true, "answer"),
                RagVerdict::Insufficient(s) => (s.clone(), false, "insufficient"),
            };
            Ok(Output {
                lines: vec![line.clone()],
                json: json!({"ok": ok, "verdict": verdict, "text": line, "queries": answer.queries}),
                ok,
                trace: None,
            })
        }
    }
}

/// Appends trace records to the session log as they happen.
struct SessionLog {
    path: PathBuf,
    trace: Trace,
    written: usize,
}

impl SessionLog {
    fn push(&mut self, record: TraceRecord) {
        self.trace.push(record);
    }

    fn flush(&mut self) -> std::io::Result<()> {
        if self.written == self.trace.len() {
            return Ok(());
        }
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let mut file = fs::OpenOptions::new().create(true).append(true).open(&self.path)?;
        for r in &self.trace.records()[self.written..] {
            writeln!(file, "{}", serde_json::to_string(r).expect("trace records serialize"))?;
        }
        self.written = self.trace.len();
        Ok(())
    }
}

fn repl(ctx: &Ctx, stdin: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut kind = PipelineKind::Agents;
    let mut engine: Option<Engine> = None;
    let mut log = SessionLog {
        path: ctx.global.trace.clone().unwrap_or_else(|| ctx.home().join("session.jsonl")),
        trace: Trace::new(),
        written: 0,
    };
    let registry = match ctx.registry() {
        Ok(r) => r,
        Err(e) => return report_error(&e, ctx.global.json, out, err),
    };
    let _ = writeln!(err, "agentos session; pipeline: {}. Type :mode agents|workflow or :quit.", kind.as_str());
    let mut line = String::new();
    loop {
        line.clear();
        match stdin.read_line(&mut line) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                let _ = writeln!(err, "error: E_IO: {e}");
                return 1;
            }
        }
        let input = line.trim();
        if input.is_empty() {
            continue;
        }
        if input == ":quit" {
            break;
        }
        if let Some(arg) = input.strip_prefix(":mode") {
            match arg.trim() {
                "agents" => kind = PipelineKind::Agents,
                "workflow" => kind = PipelineKind::Workflow,
                other => {
                    let _ = writeln!(err, "unknown pipeline {other:?}; use :mode agents or :mode workflow");
                    continue;
                }
            }
            let _ = writeln!(out, "pipeline: {}", kind.as_str());
            continue;
        }
        if input.starts_with(':') {
            let _ = writeln!(err, "unknown command {input:?}");
            continue;
        }

        log.push(
            TraceRecord::new("repl")
                .action("submit")
                .key(kind.as_str())
                .detail(input),
        );
        let result = match &engine {
            Some(e) => Ok(e.clone()),
            None => ctx.cfg.engine(),
        }
        .and_then(|e| {
            engine = Some(e.clone());
            run_pipeline(&registry, e, kind, input, None, agentos::creation::DEFAULT_MAX_ATTEMPTS)
        });
        match result {
            Ok(outcome) => {
                let output = outcome_output(outcome);
                if let Some(trace) = output.trace {
                    log.trace.extend(trace);
                }
                log.push(
                    TraceRecord::new("repl")
                        .action(if output.ok { "done" } else { "failed" })
                        .detail(output.lines.join("\n")),
                );
                let _ = if ctx.global.json {
                    writeln!(out, "{}", output.json)
                } else {
                    output.lines.iter().try_for_each(|l| writeln!(out, "{l}"))
                };
            }
            Err(e) => {
                let message = match &e {
                    CliError::Failed { code, message } => coded(code, message),
                    CliError::Usage(m) => m.clone(),
                };
                log.push(TraceRecord::new("repl").action("error").detail(&message));
                let _ = writeln!(err, "error: {message}");
            }
        }
        if let Err(e) = log.flush() {
            let _ = writeln!(err, "warning: session log {}: {e}", log.path.display());
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_element_skips_prolog() {
        assert_eq!(root_element("<?xml version=\"1.0\"?>\n<!-- x -->\n<workflow>"), Some("workflow"));
        assert_eq!(root_element("<agents/>"), Some("agents"));
        assert_eq!(root_element("no xml"), None);
    }

    #[test]
    fn api_key_is_redacted_in_debug() {
        let args = Cli::try_parse_from(["agentos", "repl"]).unwrap().global;
        let env = BTreeMap::from([("AGENT_API_KEY".to_string(), "sk-very-secret".to_string())]);
        let cfg = CliConfig::resolve(&args, &env).unwrap();
        assert_eq!(cfg.api_key, "sk-very-secret");
        assert!(!format!("{cfg:?}").contains("sk-very-secret"));
    }
}
