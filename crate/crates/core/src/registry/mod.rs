//! On-disk registry of tools, agents and workflows.
//!
//! Each item lives in `<root>/<kind>s/<encoded name>.def`: a format header line followed by
//! a TOML document. Writes go to a temporary file in the same directory and are renamed
//! into place, so a reader sees either the old or the new version. Mutations of one kind
//! are serialized by a per-kind lock.

mod tools;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::ToolSchema;
use crate::forms::{parse_workflow_form, validate_workflow_form, RegistryView, WorkflowForm};
use crate::kernel::{AgentDefinition, AgentLookup, ToolRunner};
use crate::message::{ToolCall, ToolResult};

pub use tools::{
    check_args, primitive_schema, ProcessRunner, ScriptRunner, ToolBody, ToolDefinition,
    ToolRunnerHandle, PRIMITIVES,
};

pub const FORMAT_HEADER: &str = "# agentos-def 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemKind {
    Tool,
    Agent,
    Workflow,
}

impl ItemKind {
    pub const ALL: [ItemKind; 3] = [ItemKind::Tool, ItemKind::Agent, ItemKind::Workflow];

    pub fn as_str(self) -> &'static str {
        match self {
            ItemKind::Tool => "tool",
            ItemKind::Agent => "agent",
            ItemKind::Workflow => "workflow",
        }
    }

    fn dir(self) -> &'static str {
        match self {
            ItemKind::Tool => "tools",
            ItemKind::Agent => "agents",
            ItemKind::Workflow => "workflows",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ItemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ItemKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim_end_matches('s') {
            "tool" => Ok(ItemKind::Tool),
            "agent" => Ok(ItemKind::Agent),
            "workflow" => Ok(ItemKind::Workflow),
            _ => Err(format!("unknown item kind {s:?}; expected tool, agent or workflow")),
        }
    }
}

/// A stored workflow: its form, kept verbatim as XML.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkflowDefinition {
    pub name: String,
    pub form: String,
}

impl WorkflowDefinition {
    pub fn from_form(form: &WorkflowForm) -> Self {
        Self {
            name: form.name.clone(),
            form: form.to_xml(),
        }
    }

    pub fn parse(&self) -> Result<WorkflowForm, RegistryError> {
        parse_workflow_form(&self.form).map_err(|e| RegistryError::Format(format!("workflow {}: {e}", self.name)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("E_INVALID_DEF: {0}")]
    InvalidDef(String),
    #[error("E_NOT_FOUND: no {kind} named {name:?}")]
    NotFound { kind: ItemKind, name: String },
    #[error("E_RUNNER_REFUSED: {0}")]
    RunnerRefused(String),
    #[error("E_IO: {0}")]
    Io(String),
    #[error("E_FORMAT: {0}")]
    Format(String),
}

impl RegistryError {
    pub fn code(&self) -> &'static str {
        match self {
            RegistryError::InvalidDef(_) => "E_INVALID_DEF",
            RegistryError::NotFound { .. } => "E_NOT_FOUND",
            RegistryError::RunnerRefused(_) => "E_RUNNER_REFUSED",
            RegistryError::Io(_) => "E_IO",
            RegistryError::Format(_) => "E_FORMAT",
        }
    }
}

fn io_err(path: &Path, e: io::Error) -> RegistryError {
    RegistryError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemMeta {
    pub version: u64,
    pub created_at: u64,
}

#[derive(Serialize, Deserialize)]
struct Stored<T> {
    kind: ItemKind,
    version: u64,
    created_at: u64,
    definition: T,
}

/// Byte-exact copy of every definition file, for rollback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    files: BTreeMap<PathBuf, Vec<u8>>,
}

/// Percent-encodes everything outside `[A-Za-z0-9_-]` so any item name is a safe file name.
pub fn encode_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for b in name.bytes() {
        if b.is_ascii_alphanumeric() || b == b'_' || b == b'-' {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

pub fn decode_name(encoded: &str) -> Option<String> {
    let bytes = encoded.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = encoded.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug)]
pub struct Registry {
    root: PathBuf,
    locks: [Mutex<()>; 3],
    runner: ToolRunnerHandle,
}

impl Registry {
    /// Opens (creating if needed) the registry rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let root = root.into();
        for kind in ItemKind::ALL {
            let dir = root.join(kind.dir());
            fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        }
        Ok(Self {
            root,
            locks: Default::default(),
            runner: ToolRunnerHandle::new(),
        })
    }

    pub fn with_runner(mut self, runner: ToolRunnerHandle) -> Self {
        self.runner = runner;
        self
    }

    pub fn runner(&self) -> &ToolRunnerHandle {
        &self.runner
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn item_path(&self, kind: ItemKind, name: &str) -> PathBuf {
        self.root.join(kind.dir()).join(format!("{}.def", encode_name(name)))
    }

    fn read_stored<T: DeserializeOwned>(&self, kind: ItemKind, name: &str) -> Result<Stored<T>, RegistryError> {
        let path = self.item_path(kind, name);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(RegistryError::NotFound {
                    kind,
                    name: name.to_string(),
                })
            }
            Err(e) => return Err(io_err(&path, e)),
        };
        let body = text
            .strip_prefix(FORMAT_HEADER)
            .and_then(|rest| rest.strip_prefix('\n'))
            .ok_or_else(|| RegistryError::Format(format!("{}: missing or unsupported header", path.display())))?;
        let stored: Stored<T> =
            toml::from_str(body).map_err(|e| RegistryError::Format(format!("{}: {e}", path.display())))?;
        if stored.kind != kind {
            return Err(RegistryError::Format(format!(
                "{}: holds a {}, expected a {kind}",
                path.display(),
                stored.kind
            )));
        }
        Ok(stored)
    }

    /// Metadata of a stored item.
    pub fn meta(&self, kind: ItemKind, name: &str) -> Result<ItemMeta, RegistryError> {
        let stored: Stored<toml::Value> = self.read_stored(kind, name)?;
        Ok(ItemMeta {
            version: stored.version,
            created_at: stored.created_at,
        })
    }

    fn write<T: Serialize>(&self, kind: ItemKind, name: &str, definition: T) -> Result<u64, RegistryError> {
        let _guard = self.locks[kind.slot()].lock().expect("registry lock");
        let (version, created_at) = match self.meta(kind, name) {
            Ok(m) => (m.version + 1, m.created_at),
            Err(RegistryError::NotFound { .. }) => (1, now_secs()),
            Err(e) => return Err(e),
        };
        let stored = Stored {
            kind,
            version,
            created_at,
            definition,
        };
        let body = toml::to_string(&stored).map_err(|e| RegistryError::Format(e.to_string()))?;
        let path = self.item_path(kind, name);
        atomic_write(&path, format!("{FORMAT_HEADER}\n{body}").as_bytes())?;
        Ok(version)
    }

    pub fn put_tool(&self, def: &ToolDefinition) -> Result<u64, RegistryError> {
        def.check().map_err(RegistryError::InvalidDef)?;
        self.write(ItemKind::Tool, &def.name, def)
    }

    pub fn put_agent(&self, def: &AgentDefinition) -> Result<u64, RegistryError> {
        def.check().map_err(RegistryError::InvalidDef)?;
        self.write(ItemKind::Agent, &def.name, def)
    }

    /// Validates the form against this registry (so an existing name fails V1) and stores it.
    pub fn put_workflow(&self, def: &WorkflowDefinition) -> Result<u64, RegistryError> {
        let form = parse_workflow_form(&def.form).map_err(|e| RegistryError::InvalidDef(e.to_string()))?;
        if form.name != def.name {
            return Err(RegistryError::InvalidDef(format!(
                "definition name {:?} differs from form name {:?}",
                def.name, form.name
            )));
        }
        let diags = validate_workflow_form(&form, self);
        if !diags.is_empty() {
            let text: Vec<String> = diags.iter().map(ToString::to_string).collect();
            return Err(RegistryError::InvalidDef(text.join("; ")));
        }
        self.write(ItemKind::Workflow, &def.name, def)
    }

    pub fn get_tool(&self, name: &str) -> Result<ToolDefinition, RegistryError> {
        Ok(self.read_stored(ItemKind::Tool, name)?.definition)
    }

    pub fn get_agent(&self, name: &str) -> Result<AgentDefinition, RegistryError> {
        Ok(self.read_stored(ItemKind::Agent, name)?.definition)
    }

    pub fn get_workflow(&self, name: &str) -> Result<WorkflowDefinition, RegistryError> {
        Ok(self.read_stored(ItemKind::Workflow, name)?.definition)
    }

    pub fn contains(&self, kind: ItemKind, name: &str) -> bool {
        self.item_path(kind, name).is_file()
    }

    /// Names of stored items, sorted.
    pub fn list(&self, kind: ItemKind) -> Result<Vec<String>, RegistryError> {
        let dir = self.root.join(kind.dir());
        let mut names = Vec::new();
        for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
            let entry = entry.map_err(|e| io_err(&dir, e))?;
            let file = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = file.strip_suffix(".def") {
                if let Some(name) = decode_name(stem) {
                    names.push(name);
                }
            }
        }
        names.sort();
        Ok(names)
    }

    pub fn delete(&self, kind: ItemKind, name: &str) -> Result<(), RegistryError> {
        let _guard = self.locks[kind.slot()].lock().expect("registry lock");
        let path = self.item_path(kind, name);
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(RegistryError::NotFound {
                kind,
                name: name.to_string(),
            }),
            Err(e) => Err(io_err(&path, e)),
        }
    }

    pub fn snapshot(&self) -> Result<Snapshot, RegistryError> {
        let mut files = BTreeMap::new();
        for kind in ItemKind::ALL {
            let dir = self.root.join(kind.dir());
            for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                let path = entry.map_err(|e| io_err(&dir, e))?.path();
                if path.extension().is_some_and(|x| x == "def") {
                    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
                    files.insert(path, bytes);
                }
            }
        }
        Ok(Snapshot { files })
    }

    /// Restores the exact files of `snap`, removing definitions created since.
    pub fn restore(&self, snap: &Snapshot) -> Result<(), RegistryError> {
        let _guards: Vec<_> = self.locks.iter().map(|l| l.lock().expect("registry lock")).collect();
        let current = {
            let mut files = Vec::new();
            for kind in ItemKind::ALL {
                let dir = self.root.join(kind.dir());
                for entry in fs::read_dir(&dir).map_err(|e| io_err(&dir, e))? {
                    let path = entry.map_err(|e| io_err(&dir, e))?.path();
                    if path.extension().is_some_and(|x| x == "def") {
                        files.push(path);
                    }
                }
            }
            files
        };
        for path in current {
            if !snap.files.contains_key(&path) {
                fs::remove_file(&path).map_err(|e| io_err(&path, e))?;
            }
        }
        for (path, bytes) in &snap.files {
            if fs::read(path).ok().as_deref() != Some(bytes.as_slice()) {
                atomic_write(path, bytes)?;
            }
        }
        Ok(())
    }

    /// Runs a stored tool. Argument problems come back as an `E_ARGS` error result so the
    /// calling agent can see and fix them.
    pub fn run_tool(&self, name: &str, args: &BTreeMap<String, String>) -> Result<ToolResult, RegistryError> {
        let def = self.get_tool(name)?;
        if let Err(result) = check_args(&def.schema, args) {
            return Ok(result);
        }
        match &def.body {
            ToolBody::Builtin { primitive } => Ok(self.runner.run_primitive(primitive, args)),
            ToolBody::Script { runner, source } => {
                let Some(exec) = self.runner.runner(runner) else {
                    return Err(RegistryError::RunnerRefused(format!(
                        "tool {name:?} needs script runner {runner:?}, which is not configured"
                    )));
                };
                Ok(match exec.run(source, args) {
                    Ok(out) => ToolResult::ok(out),
                    Err(msg) => ToolResult::error("E_SCRIPT", msg),
                })
            }
        }
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), RegistryError> {
    let dir = path.parent().expect("definition files live in a directory");
    let tmp = dir.join(format!(
        ".{}.{}-{}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("item"),
        std::process::id(),
        TEMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        io_err(path, e)
    })
}

impl RegistryView for Registry {
    fn has_tool(&self, name: &str) -> bool {
        self.contains(ItemKind::Tool, name)
    }
    fn has_agent(&self, name: &str) -> bool {
        self.contains(ItemKind::Agent, name)
    }
    fn has_workflow(&self, name: &str) -> bool {
        self.contains(ItemKind::Workflow, name)
    }
}

impl AgentLookup for Registry {
    fn agent(&self, name: &str) -> Option<AgentDefinition> {
        self.get_agent(name).ok()
    }
}

/// Exposes the registry's stored tools to agents.
impl ToolRunner for Registry {
    fn schema(&self, name: &str) -> Option<ToolSchema> {
        self.get_tool(name).ok().map(|d| d.schema)
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        match self.run_tool(&call.tool_name, &call.arguments) {
            Ok(r) => r,
            Err(e) => ToolResult::error(e.code(), e.to_string()),
        }
    }
}

/// Several tool runners searched in order; the first that knows a tool handles it.
#[derive(Default)]
pub struct ToolSet<'a> {
    runners: Vec<&'a dyn ToolRunner>,
}

impl<'a> ToolSet<'a> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, runner: &'a dyn ToolRunner) -> Self {
        self.runners.push(runner);
        self
    }
}

impl ToolRunner for ToolSet<'_> {
    fn schema(&self, name: &str) -> Option<ToolSchema> {
        self.runners.iter().find_map(|r| r.schema(name))
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        match self.runners.iter().find(|r| r.schema(&call.tool_name).is_some()) {
            Some(r) => r.invoke(call),
            None => ToolResult::error("E_UNKNOWN_TOOL", format!("no tool named {:?}", call.tool_name)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_encode_reversibly() {
        for name in ["DaVinci Agent", "plain_name", "a/b%c", "ünï"] {
            let enc = encode_name(name);
            assert!(enc.bytes().all(|b| b.is_ascii_alphanumeric() || b"_-%".contains(&b)));
            assert_eq!(decode_name(&enc).as_deref(), Some(name));
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("tools".parse::<ItemKind>().unwrap(), ItemKind::Tool);
        assert_eq!("workflow".parse::<ItemKind>().unwrap(), ItemKind::Workflow);
        assert!("widget".parse::<ItemKind>().is_err());
    }
}
