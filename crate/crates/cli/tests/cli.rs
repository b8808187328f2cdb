use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use agentos::engine::{render_call, Step};
use agentos::kernel::AgentDefinition;
use agentos::message::ToolCall;
use agentos::registry::{Registry, ToolDefinition};
use agentos::trace::Trace;
use serde_json::{json, Value};

const WORKFLOW_FORM: &str = include_str!("../../core/tests/fixtures/workflow_form.xml");
const WIKI_WORKFLOW: &str = include_str!("../../core/tests/fixtures/wiki_workflow.xml");
const SINGLE_FORM: &str = include_str!("../../core/tests/fixtures/single_form.xml");

struct Run {
    code: i32,
    out: String,
    err: String,
}

fn run_env(args: &[&str], env: &[(&str, &str)], stdin: &str) -> Run {
    let argv: Vec<String> = std::iter::once("agentos").chain(args.iter().copied()).map(String::from).collect();
    let env: BTreeMap<String, String> = env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = agentos_cli::run(&argv, &env, &mut stdin.as_bytes(), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

fn as_refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn run(args: &[&str]) -> Run {
    run_env(args, &[], "")
}

/// A temporary state directory; every command gets `--home` pointing at it.
struct Home {
    dir: tempfile::TempDir,
}

impl Home {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str, body: &str) -> String {
        let p = self.path().join(name);
        fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    }

    fn seeded(self) -> Self {
        let reg = Registry::open(self.path().join("registry")).unwrap();
        for t in ["visual_question_answering", "save_raw_docs_to_vector_db", "query_db"] {
            reg.put_tool(&ToolDefinition::builtin(t, "echo").unwrap()).unwrap();
        }
        reg.put_agent(&AgentDefinition::new("Web Surfer Agent", "You look things up.").with_description("Searches."))
            .unwrap();
        self
    }

    fn args<'a>(&'a self, rest: &[&'a str]) -> Vec<&'a str> {
        let mut v = vec!["--home", self.path().to_str().unwrap()];
        v.extend_from_slice(rest);
        v
    }
}

fn call(name: &str, args: &[(&str, &str)]) -> Value {
    let mut c = ToolCall::new(name);
    for (k, v) in args {
        c = c.arg(*k, *v);
    }
    serde_json::to_value(Step::text(render_call(&c))).unwrap()
}

fn text(s: &str) -> Value {
    serde_json::to_value(Step::text(s)).unwrap()
}

fn davinci_script() -> String {
    json!({"lanes": {
        "Agent Profiling Agent": [text(&format!("The form:\n{SINGLE_FORM}"))],
        "Tool Editor Agent": [
            call("create_tool", &[("name", "generate_image"), ("description", "Draw."), ("primitive", "echo")]),
            call("create_tool", &[("name", "refine_image"), ("primitive", "echo")]),
            text("Done.\n<test=generate_image>{\"text\": \"fox\"}</test>\n<test=refine_image>{\"text\": \"sharper\"}</test>"),
        ],
        "Agent Editor Agent": [
            call("create_agent", &[
                ("name", "DaVinci Agent"),
                ("description", "Makes and judges images."),
                ("instructions", "Generate the image, evaluate it, refine it."),
                ("tools", "visual_question_answering, generate_image, refine_image"),
            ]),
            text("Registered."),
        ],
        "DaVinci Agent": [text("A fox, rated 8/10.")],
    }})
    .to_string()
}

#[test]
fn validate_accepts_the_voting_form() {
    let home = Home::new();
    let form = home.file("workflow_form.xml", WORKFLOW_FORM);
    let r = run(&home.args(&["validate", &form]));
    assert_eq!(r.code, 0, "{}{}", r.out, r.err);
    assert_eq!(r.out.trim(), "0 diagnostics");
}

#[test]
fn validate_reports_a_bad_goto_target() {
    let home = Home::new().seeded();
    let ok = home.file("wiki.xml", WIKI_WORKFLOW);
    assert_eq!(run(&home.args(&["validate", &ok])).code, 0);
    let bad = home.file(
        "mutated_v5.xml",
        &WIKI_WORKFLOW.replace("<value>on_outline</value>", "<value>no_such_event</value>"),
    );
    let r = run(&home.args(&["validate", &bad]));
    assert_eq!(r.code, 1);
    assert!(r.out.lines().next().unwrap().starts_with("V5"), "{}", r.out);
    assert!(r.out.ends_with("1 diagnostics\n"));
    let j = run(&home.args(&["--json", "validate", &bad]));
    let v: Value = serde_json::from_str(&j.out).unwrap();
    assert_eq!(v["diagnostics"][0]["code"], "V5");
}

#[test]
fn exit_codes_follow_the_contract() {
    let home = Home::new();
    let missing = home.path().join("nope.xml");
    let cases: Vec<(Vec<&str>, i32, &str)> = vec![
        (vec![], 2, ""),
        (vec!["frobnicate"], 2, ""),
        (vec!["run-workflow", "x"], 2, "--input"),
        (vec!["--cassette-mode", "replay", "create-agents", "--requirements", "r"], 2, "cassette"),
        (vec!["rag", "query", "q", "--collection", "missing"], 1, "E_NOT_FOUND"),
        (vec!["registry", "show", "agent", "Nobody"], 1, "E_NOT_FOUND"),
        (vec!["registry", "list", "widgets"], 2, ""),
        (vec!["validate", missing.to_str().unwrap()], 1, "E_IO"),
        (vec!["run-agent", "Nobody", "--task", "t"], 1, "E_NOT_FOUND"),
        (vec!["registry", "list"], 0, ""),
        (vec!["--help"], 0, ""),
    ];
    for (args, code, needle) in cases {
        let r = run(&home.args(&args));
        assert_eq!(r.code, code, "{args:?}: {}{}", r.out, r.err);
        assert!(r.err.contains(needle), "{args:?}: {}", r.err);
    }
}

#[test]
fn live_backend_without_key_fails_cleanly() {
    let home = Home::new().seeded();
    let r = run_env(&home.args(&["run-agent", "Web Surfer Agent", "--task", "t"]), &[], "");
    assert_eq!(r.code, 1);
    assert!(r.err.contains("E_CONFIG"), "{}", r.err);
}

#[test]
fn run_workflow_reports_the_vote_and_writes_a_trace() {
    let home = Home::new();
    let form = home.file("workflow_form.xml", WORKFLOW_FORM);
    let out = |k: &str, v: &str| text(&format!("<output={k}>{v}</output>"));
    let script = home.file(
        "script.json",
        &json!({"lanes": {
            "Math Solver Agent@gpt-4o-2024-08-06": [out("gpt4_solution", "4")],
            "Math Solver Agent@claude-3-5-sonnet-20241022": [out("claude_solution", "4")],
            "Math Solver Agent@deepseek/deepseek-chat": [out("deepseek_solution", "5")],
            "Vote Aggregator Agent": [out("final_solution", "4")],
        }})
        .to_string(),
    );
    let trace = home.path().join("run.jsonl");
    let r = run(&home.args(&[
        "--script",
        &script,
        "--trace",
        trace.to_str().unwrap(),
        "--json",
        "run-workflow",
        &form,
        "--input",
        "2 + 2",
        "--parallel",
    ]));
    assert_eq!(r.code, 0, "{}", r.err);
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["value"], "4");
    let t = Trace::parse_jsonl(&fs::read_to_string(&trace).unwrap()).unwrap();
    assert!(t.records().iter().any(|r| r.event.as_deref() == Some("aggregate_solutions")));
}

#[test]
fn run_workflow_abort_exits_one() {
    let home = Home::new();
    let form = home.file("workflow_form.xml", WORKFLOW_FORM);
    let script = home.file("empty.json", "[]");
    let r = run(&home.args(&["--script", &script, "run-workflow", &form, "--input", "1+1"]));
    assert_eq!(r.code, 1);
    assert!(r.out.starts_with("aborted: "), "{}", r.out);
}

#[test]
fn env_overrides_config_file_and_flags_override_env() {
    let home = Home::new().seeded();
    let config = home.file("agentos.toml", "model = \"from-file\"\n");
    let script = home.file(
        "script.json",
        &json!({"lanes": {
            "from-file": [text("file model")],
            "from-env": [text("env model")],
            "from-flag": [text("flag model")],
        }})
        .to_string(),
    );
    let base = ["--config", config.as_str(), "--script", script.as_str()];
    let task = ["run-agent", "Web Surfer Agent", "--task", "hi"];
    let args = |extra: &[&str]| -> Vec<String> {
        home.args(&[&base[..], extra, &task[..]].concat()).iter().map(|s| s.to_string()).collect()
    };
    assert_eq!(run(&as_refs(&args(&[]))).out, "file model\n");
    let env = [("AGENT_MODEL", "from-env")];
    assert_eq!(run_env(&as_refs(&args(&[])), &env, "").out, "env model\n");
    assert_eq!(run_env(&as_refs(&args(&["--model", "from-flag"])), &env, "").out, "flag model\n");
}

#[test]
fn api_key_never_reaches_output() {
    let home = Home::new();
    let secret = "sk-test-0123456789";
    let config = home.file("agentos.toml", &format!("api_key = \"{secret}\"\napi_base = \"http://127.0.0.1:9\"\n"));
    for args in [
        vec!["--config", config.as_str(), "registry", "list"],
        vec!["--config", config.as_str(), "--json", "rag", "query", "q"],
        vec!["--config", config.as_str(), "create-agents", "--requirements", "x", "--max-attempts", "0"],
    ] {
        let r = run_env(&home.args(&args), &[("AGENT_API_KEY", secret)], "");
        assert!(!r.out.contains(secret) && !r.err.contains(secret), "{args:?}");
    }
}

#[test]
fn unknown_config_keys_are_usage_errors() {
    let home = Home::new();
    let config = home.file("bad.toml", "modle = \"typo\"\n");
    assert_eq!(run(&home.args(&["--config", &config, "registry", "list"])).code, 2);
}

#[test]
fn registry_commands() {
    let home = Home::new().seeded();
    let r = run(&home.args(&["registry", "list", "agents"]));
    assert_eq!(r.out, "agent\tWeb Surfer Agent\n");
    let r = run(&home.args(&["registry", "show", "tool", "query_db"]));
    assert_eq!(r.code, 0);
    assert!(r.out.contains("query_db"));
    assert_eq!(run(&home.args(&["registry", "delete", "agent", "Web Surfer Agent"])).code, 0);
    assert_eq!(run(&home.args(&["registry", "list", "agent"])).out, "");
    assert_eq!(run(&home.args(&["registry", "delete", "agent", "Web Surfer Agent"])).code, 1);
}

#[test]
fn rag_add_then_query() {
    let home = Home::new();
    let docs = home.path().join("docs");
    fs::create_dir_all(&docs).unwrap();
    fs::write(docs.join("ai.md"), "ChatGPT reached 100M users within two months").unwrap();
    fs::write(docs.join("spring.txt"), "Spring weather is mild and rainy").unwrap();
    let r = run(&home.args(&["rag", "add", docs.to_str().unwrap(), "--collection", "news"]));
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("2 chunk(s) from 2 file(s)"), "{}", r.out);
    let r = run(&home.args(&["--json", "rag", "query", "100M users ChatGPT", "--collection", "news", "-k", "1"]));
    let v: Value = serde_json::from_str(&r.out).unwrap();
    assert_eq!(v["hits"].as_array().unwrap().len(), 1);
    assert!(v["hits"][0]["doc_id"].as_str().unwrap().ends_with("ai.md"));
}

#[test]
fn create_agents_from_a_script() {
    let home = Home::new().seeded();
    let script = home.file("script.json", &davinci_script());
    let r = run(&home.args(&[
        "--script",
        &script,
        "create-agents",
        "--requirements",
        "an agent that draws and critiques images",
        "--task",
        "draw a fox",
    ]));
    assert_eq!(r.code, 0, "{}{}", r.out, r.err);
    assert!(r.out.contains("created tool generate_image\ncreated tool refine_image\ncreated agent DaVinci Agent\n"));
    assert!(r.out.contains("result: A fox, rated 8/10."));
    assert!(run(&home.args(&["registry", "list", "agent"])).out.contains("DaVinci Agent"));
}

#[test]
fn failed_creation_exits_one() {
    let home = Home::new().seeded();
    let script = home.file("script.json", &json!({"lanes": {"Agent Profiling Agent": [text("no form here")]}}).to_string());
    let r = run(&home.args(&["--script", &script, "create-agents", "--requirements", "r", "--max-attempts", "1"]));
    assert_eq!(r.code, 1);
    assert!(r.out.contains("phase: profiling"), "{}", r.out);
}

fn copy_dir(from: &Path, to: &Path) {
    for entry in walk(from) {
        let rel = entry.strip_prefix(from).unwrap();
        let dest = to.join(rel);
        fs::create_dir_all(dest.parent().unwrap()).unwrap();
        fs::copy(&entry, &dest).unwrap();
    }
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn replayed_sessions_are_byte_identical() {
    let source = Home::new().seeded();
    let pristine = tempfile::tempdir().unwrap();
    copy_dir(&source.path().join("registry"), pristine.path());
    let script = source.file("script.json", &davinci_script());
    let cassette = source.path().join("session.cassette");
    let cassette = cassette.to_str().unwrap();
    let requirements = ["create-agents", "--requirements", "draw and critique images", "--task", "draw a fox"];

    let mut recorded = vec!["--script", script.as_str(), "--cassette", cassette, "--cassette-mode", "record"];
    recorded.extend(requirements);
    let first = run(&source.args(&recorded));
    assert_eq!(first.code, 0, "{}", first.err);

    let mut results = Vec::new();
    for _ in 0..2 {
        let home = Home::new();
        copy_dir(pristine.path(), &home.path().join("registry"));
        let trace = home.path().join("trace.jsonl");
        // No script: any request missing from the cassette fails instead of reaching a network.
        let mut replay = vec!["--cassette", cassette, "--trace", trace.to_str().unwrap()];
        replay.extend(requirements);
        let r = run(&home.args(&replay));
        assert_eq!(r.code, 0, "{}", r.err);
        results.push((r.out, fs::read(&trace).unwrap()));
    }
    assert_eq!(results[0], results[1]);
    assert_eq!(results[0].0, first.out);
}

#[test]
fn repl_quits_cleanly_with_an_empty_log() {
    let home = Home::new();
    let r = run_env(&home.args(&["repl"]), &[], ":quit\n");
    assert_eq!(r.code, 0);
    assert_eq!(r.out, "");
    assert!(!home.path().join("session.jsonl").exists());
}

#[test]
fn repl_survives_backend_errors() {
    let home = Home::new();
    let script = home.file("script.json", "[]");
    let r = run_env(&home.args(&["--script", &script, "repl"]), &[], "make me an agent\n:quit\nnever read\n");
    assert_eq!(r.code, 0);
    // The empty script fails every profiling attempt; the cause is reported and the session goes on.
    assert!(r.out.contains("error: E_PHASE_EXHAUSTED"), "{}", r.out);
    assert!(r.out.contains("E_SCRIPT_EXHAUSTED") || r.out.contains("exhausted"), "{}", r.out);
    let log = Trace::parse_jsonl(&fs::read_to_string(home.path().join("session.jsonl")).unwrap()).unwrap();
    assert_eq!(log.records().first().unwrap().action.as_deref(), Some("submit"));

    // No API key at all: the error is printed and the session continues.
    let r = run_env(&home.args(&["repl"]), &[], "make me an agent\n:mode workflow\n:quit\n");
    assert_eq!(r.code, 0);
    assert!(r.err.contains("E_CONFIG"));
    assert_eq!(r.out, "pipeline: workflow\n");
}

#[test]
fn repl_runs_the_davinci_session() {
    let home = Home::new().seeded();
    let script = home.file("script.json", &davinci_script());
    let r = run_env(
        &home.args(&["--script", &script, "repl"]),
        &[],
        ":mode agents\nan agent that draws and critiques images\n:quit\n",
    );
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("created agent DaVinci Agent"), "{}", r.out);
    let log = Trace::parse_jsonl(&fs::read_to_string(home.path().join("session.jsonl")).unwrap()).unwrap();
    assert_eq!(log.records().last().unwrap().action.as_deref(), Some("done"));
}

#[test]
fn binary_exit_codes() {
    let home = Home::new();
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_agentos"))
        .args(home.args(&["registry", "list"]))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let status = std::process::Command::new(env!("CARGO_BIN_EXE_agentos"))
        .arg("bogus")
        .stderr(std::process::Stdio::null())
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
