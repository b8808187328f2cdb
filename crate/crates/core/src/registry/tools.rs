//! Tool definitions, the builtin primitives, and the script runner policy.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Component, Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::engine::{ParamSchema, ToolSchema};
use crate::message::{is_identifier, ToolResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ToolBody {
    Builtin { primitive: String },
    Script { runner: String, source: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolDefinition {
    pub name: String,
    pub description: String,
    pub schema: ToolSchema,
    pub body: ToolBody,
}

impl ToolDefinition {
    /// A tool that wraps one of the builtin primitives under its own name.
    pub fn builtin(name: &str, primitive: &str) -> Option<Self> {
        let mut schema = primitive_schema(primitive)?;
        schema.name = name.to_string();
        Some(Self {
            name: name.to_string(),
            description: schema.description.clone(),
            schema,
            body: ToolBody::Builtin {
                primitive: primitive.to_string(),
            },
        })
    }

    pub fn script(name: &str, description: &str, params: Vec<ParamSchema>, runner: &str, source: &str) -> Self {
        let mut schema = ToolSchema::new(name, description);
        schema.parameters = params;
        Self {
            name: name.to_string(),
            description: description.to_string(),
            schema,
            body: ToolBody::Script {
                runner: runner.to_string(),
                source: source.to_string(),
            },
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !is_identifier(&self.name) {
            return Err(format!("tool name {:?} is not an identifier", self.name));
        }
        if self.schema.name != self.name {
            return Err(format!(
                "schema name {:?} differs from tool name {:?}",
                self.schema.name, self.name
            ));
        }
        self.schema.check()?;
        match &self.body {
            ToolBody::Builtin { primitive } if primitive_schema(primitive).is_none() => {
                Err(format!("unknown builtin primitive {primitive:?}"))
            }
            ToolBody::Script { runner, .. } if runner.trim().is_empty() => {
                Err("script body needs a runner id".into())
            }
            _ => Ok(()),
        }
    }
}

pub const PRIMITIVES: [&str; 5] = [
    "echo",
    "read_text_file",
    "write_text_file",
    "list_directory",
    "arithmetic_eval",
];

/// The calling schema of a builtin primitive.
pub fn primitive_schema(primitive: &str) -> Option<ToolSchema> {
    let s = match primitive {
        "echo" => ToolSchema::new("echo", "Return the given text unchanged.")
            .param(ParamSchema::required("text", "Text to return.")),
        "read_text_file" => ToolSchema::new("read_text_file", "Read a UTF-8 text file inside the workspace.")
            .param(ParamSchema::required("path", "Path relative to the workspace.")),
        "write_text_file" => ToolSchema::new(
            "write_text_file",
            "Create or overwrite a UTF-8 text file inside the workspace.",
        )
        .param(ParamSchema::required("path", "Path relative to the workspace."))
        .param(ParamSchema::required("content", "Full file content.")),
        "list_directory" => ToolSchema::new(
            "list_directory",
            "List the entries of a workspace directory, one per line, directories suffixed with '/'.",
        )
        .param(ParamSchema::optional("path", "Directory relative to the workspace; defaults to its root.")),
        "arithmetic_eval" => ToolSchema::new("arithmetic_eval", "Evaluate an arithmetic expression.")
            .param(ParamSchema::required("expr", "Expression such as (2+3)*4.")),
        _ => return None,
    };
    Some(s)
}

/// Executes script-bodied tools. Implementations decide how sandboxed that is.
pub trait ScriptRunner: Send + Sync {
    /// Runs `source` with `args`; returns captured output or an error message.
    fn run(&self, source: &str, args: &BTreeMap<String, String>) -> Result<String, String>;
}

/// Runs scripts with an external interpreter, confined to a working directory.
///
/// The script is written to a file in `workdir` and executed as `program [args..] <file>`;
/// the tool arguments arrive as a JSON object on stdin and stdout becomes the payload.
#[derive(Debug, Clone)]
pub struct ProcessRunner {
    pub program: String,
    pub args: Vec<String>,
    pub workdir: PathBuf,
}

impl ScriptRunner for ProcessRunner {
    fn run(&self, source: &str, args: &BTreeMap<String, String>) -> Result<String, String> {
        std::fs::create_dir_all(&self.workdir).map_err(|e| e.to_string())?;
        let script = self.workdir.join(format!(".tool-{}.script", std::process::id()));
        std::fs::write(&script, source).map_err(|e| e.to_string())?;
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .arg(&script)
            .current_dir(&self.workdir)
            .env_clear()
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| format!("cannot start {}: {e}", self.program))?;
        let input = serde_json::to_vec(args).map_err(|e| e.to_string())?;
        if let Some(mut stdin) = child.stdin.take() {
            let _ = stdin.write_all(&input);
        }
        let output = child.wait_with_output().map_err(|e| e.to_string());
        let _ = std::fs::remove_file(&script);
        let output = output?;
        let stdout = String::from_utf8_lossy(&output.stdout).into_owned();
        if output.status.success() {
            Ok(stdout)
        } else {
            Err(format!(
                "exit {}: {}{}",
                output.status.code().unwrap_or(-1),
                stdout,
                String::from_utf8_lossy(&output.stderr)
            ))
        }
    }
}

/// Where builtin file primitives may read and write, plus the configured script runners.
///
/// The default has no script runners, so script-bodied tools are refused.
#[derive(Clone, Default)]
pub struct ToolRunnerHandle {
    workspace: Option<PathBuf>,
    runners: BTreeMap<String, Arc<dyn ScriptRunner>>,
}

impl std::fmt::Debug for ToolRunnerHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRunnerHandle")
            .field("workspace", &self.workspace)
            .field("runners", &self.runners.keys().collect::<Vec<_>>())
            .finish()
    }
}

impl ToolRunnerHandle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_workspace(mut self, dir: impl Into<PathBuf>) -> Self {
        self.workspace = Some(dir.into());
        self
    }

    pub fn with_runner(mut self, id: impl Into<String>, runner: Arc<dyn ScriptRunner>) -> Self {
        self.runners.insert(id.into(), runner);
        self
    }

    pub fn runner(&self, id: &str) -> Option<&Arc<dyn ScriptRunner>> {
        self.runners.get(id)
    }

    /// Resolves `rel` inside the workspace, refusing absolute paths and `..`.
    fn confine(&self, rel: &str) -> Result<PathBuf, ToolResult> {
        let Some(root) = &self.workspace else {
            return Err(ToolResult::error("E_NO_WORKSPACE", "file tools need a configured workspace"));
        };
        let p = Path::new(rel);
        if p.is_absolute() || p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(ToolResult::error("E_PATH", format!("{rel:?} is outside the workspace")));
        }
        Ok(root.join(p))
    }

    /// Runs a builtin primitive; arguments are assumed checked against its schema.
    pub fn run_primitive(&self, primitive: &str, args: &BTreeMap<String, String>) -> ToolResult {
        let arg = |k: &str| args.get(k).map(String::as_str).unwrap_or("");
        match primitive {
            "echo" => ToolResult::ok(arg("text")),
            "arithmetic_eval" => match evalexpr::eval(arg("expr")) {
                Ok(evalexpr::Value::Int(i)) => ToolResult::ok(i.to_string()),
                Ok(evalexpr::Value::Float(f)) => ToolResult::ok(format_float(f)),
                Ok(other) => ToolResult::error("E_EVAL", format!("not a number: {other}")),
                Err(e) => ToolResult::error("E_EVAL", e.to_string()),
            },
            "read_text_file" => match self.confine(arg("path")) {
                Ok(p) => match std::fs::read_to_string(&p) {
                    Ok(text) => ToolResult::ok(text),
                    Err(e) => ToolResult::error("E_IO", format!("{}: {e}", arg("path"))),
                },
                Err(r) => r,
            },
            "write_text_file" => match self.confine(arg("path")) {
                Ok(p) => {
                    let res = p
                        .parent()
                        .map_or(Ok(()), std::fs::create_dir_all)
                        .and_then(|_| std::fs::write(&p, arg("content")));
                    match res {
                        Ok(()) => ToolResult::ok(format!("wrote {} bytes to {}", arg("content").len(), arg("path"))),
                        Err(e) => ToolResult::error("E_IO", format!("{}: {e}", arg("path"))),
                    }
                }
                Err(r) => r,
            },
            "list_directory" => {
                let rel = args.get("path").map(String::as_str).filter(|s| !s.is_empty()).unwrap_or(".");
                match self.confine(rel) {
                    Ok(p) => match std::fs::read_dir(&p) {
                        Ok(entries) => {
                            let mut names: Vec<String> = entries
                                .filter_map(Result::ok)
                                .map(|e| {
                                    let mut n = e.file_name().to_string_lossy().into_owned();
                                    if e.file_type().is_ok_and(|t| t.is_dir()) {
                                        n.push('/');
                                    }
                                    n
                                })
                                .collect();
                            names.sort();
                            ToolResult::ok(names.join("\n"))
                        }
                        Err(e) => ToolResult::error("E_IO", format!("{rel}: {e}")),
                    },
                    Err(r) => r,
                }
            }
            other => ToolResult::error("E_NOT_FOUND", format!("no builtin primitive {other:?}")),
        }
    }
}

fn format_float(f: f64) -> String {
    if f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{}", f as i64)
    } else {
        format!("{f}")
    }
}

/// Checks `args` against `schema`: required parameters present, no unknown parameters.
pub fn check_args(schema: &ToolSchema, args: &BTreeMap<String, String>) -> Result<(), ToolResult> {
    let missing: Vec<&str> = schema
        .parameters
        .iter()
        .filter(|p| p.required && !args.contains_key(&p.name))
        .map(|p| p.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(ToolResult::error(
            "E_ARGS",
            format!("{} is missing required argument(s): {}", schema.name, missing.join(", ")),
        ));
    }
    let unknown: Vec<&str> = args
        .keys()
        .filter(|k| !schema.parameters.iter().any(|p| &p.name == *k))
        .map(String::as_str)
        .collect();
    if !unknown.is_empty() {
        return Err(ToolResult::error(
            "E_ARGS",
            format!("{} does not take argument(s): {}", schema.name, unknown.join(", ")),
        ));
    }
    Ok(())
}
