//! Operator configuration: built-in defaults, then the TOML file, then `AGENT_*`
//! environment variables, then command-line flags.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use agentos::engine::cassette::CassetteBackend;
use agentos::engine::http::{HttpBackend, HttpConfig};
use agentos::engine::{CompletionBackend, Engine, EngineMode, ScriptedBackend};
use serde::Deserialize;

use crate::{CliError, GlobalArgs};

pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";
pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const DEFAULT_HOME: &str = ".agentos";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CassetteSetting {
    Off,
    Record,
    Replay,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    api_base: Option<String>,
    api_key: Option<String>,
    model: Option<String>,
    mode: Option<EngineMode>,
    registry_root: Option<PathBuf>,
    rag_root: Option<PathBuf>,
    cassette: Option<PathBuf>,
    cassette_mode: Option<CassetteSetting>,
}

#[derive(Clone)]
pub struct CliConfig {
    pub api_base: String,
    pub api_key: String,
    pub model: String,
    pub mode: EngineMode,
    pub registry_root: PathBuf,
    pub rag_root: PathBuf,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: CassetteSetting,
    /// Offline scripted backend (JSON steps), used instead of the HTTP client.
    pub script: Option<PathBuf>,
}

impl fmt::Debug for CliConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CliConfig")
            .field("api_base", &self.api_base)
            .field("api_key", &if self.api_key.is_empty() { "<unset>" } else { "<redacted>" })
            .field("model", &self.model)
            .field("mode", &self.mode)
            .field("registry_root", &self.registry_root)
            .field("rag_root", &self.rag_root)
            .field("cassette", &self.cassette)
            .field("cassette_mode", &self.cassette_mode)
            .field("script", &self.script)
            .finish()
    }
}

impl CliConfig {
    pub fn resolve(args: &GlobalArgs, env: &BTreeMap<String, String>) -> Result<Self, CliError> {
        let file = match &args.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?;
                toml::from_str::<FileConfig>(&text)
                    .map_err(|e| CliError::usage(format!("config {}: {e}", path.display())))?
            }
            None => FileConfig::default(),
        };
        let env_var = |k: &str| env.get(k).filter(|v| !v.is_empty()).cloned();
        let home = args.home.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_HOME));

        let mode = match (&args.mode, env_var("AGENT_MODE")) {
            (Some(m), _) => *m,
            (None, Some(m)) => m.parse().map_err(CliError::usage)?,
            (None, None) => file.mode.unwrap_or(EngineMode::Transformed),
        };
        let cassette = args.cassette.clone().or(file.cassette);
        let cassette_mode = args
            .cassette_mode
            .or(file.cassette_mode)
            .unwrap_or(if cassette.is_some() { CassetteSetting::Replay } else { CassetteSetting::Off });
        if cassette_mode != CassetteSetting::Off && cassette.is_none() {
            return Err(CliError::usage("--cassette-mode record/replay needs a --cassette path"));
        }
        Ok(Self {
            api_base: args
                .api_base
                .clone()
                .or_else(|| env_var("AGENT_API_BASE"))
                .or(file.api_base)
                .unwrap_or_else(|| DEFAULT_API_BASE.into()),
            api_key: env_var("AGENT_API_KEY").or(file.api_key).unwrap_or_default(),
            model: args
                .model
                .clone()
                .or_else(|| env_var("AGENT_MODEL"))
                .or(file.model)
                .unwrap_or_else(|| DEFAULT_MODEL.into()),
            mode,
            registry_root: args.registry.clone().or(file.registry_root).unwrap_or_else(|| home.join("registry")),
            rag_root: args.rag.clone().or(file.rag_root).unwrap_or_else(|| home.join("rag")),
            cassette,
            cassette_mode,
            script: args.script.clone(),
        })
    }

    fn live_backend(&self) -> Result<Arc<dyn CompletionBackend>, CliError> {
        if let Some(path) = &self.script {
            return Ok(Arc::new(ScriptedBackend::from_file(path).map_err(CliError::backend)?));
        }
        if self.api_key.is_empty() {
            return Err(CliError::failed(
                "E_CONFIG",
                "no API key configured; set AGENT_API_KEY or api_key in the config file",
            ));
        }
        let http = HttpBackend::new(HttpConfig {
            api_base: self.api_base.clone(),
            api_key: self.api_key.clone(),
            timeout: Duration::from_secs(120),
        })
        .map_err(CliError::backend)?;
        Ok(Arc::new(http))
    }

    pub fn engine(&self) -> Result<Engine, CliError> {
        let backend: Arc<dyn CompletionBackend> = match self.cassette_mode {
            CassetteSetting::Off => self.live_backend()?,
            CassetteSetting::Replay => {
                Arc::new(CassetteBackend::replay(self.cassette_path()).map_err(CliError::backend)?)
            }
            CassetteSetting::Record => Arc::new(
                CassetteBackend::record(self.cassette_path(), self.live_backend()?).map_err(CliError::backend)?,
            ),
        };
        Ok(Engine::new(self.mode, backend).with_default_model(&self.model))
    }

    fn cassette_path(&self) -> &Path {
        self.cassette.as_deref().expect("checked in resolve")
    }
}
