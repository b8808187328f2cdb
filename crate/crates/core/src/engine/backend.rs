//! Completion backends: the trait, retry policy, and the offline scripted doubles.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CompletionRequest, CompletionResponse};
use crate::message::ToolCall;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("E_BACKEND: transport failure: {0}")]
    Transport(String),
    #[error("E_BACKEND: HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("E_BACKEND: malformed response: {0}")]
    Malformed(String),
    #[error("E_BACKEND: backend not configured: {0}")]
    Config(String),
    #[error("E_SCRIPT_EXHAUSTED: no scripted step left for lane {0:?}")]
    ScriptExhausted(String),
    #[error("E_CASSETTE_MISS: no recorded response for request {0}")]
    CassetteMiss(String),
    #[error("E_BACKEND: cassette i/o: {0}")]
    CassetteIo(String),
}

impl BackendError {
    pub fn code(&self) -> &'static str {
        match self {
            BackendError::ScriptExhausted(_) => "E_SCRIPT_EXHAUSTED",
            BackendError::CassetteMiss(_) => "E_CASSETTE_MISS",
            _ => "E_BACKEND",
        }
    }

    /// Transport errors and 5xx/429 responses are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Status { status, .. } => *status >= 500 || *status == 429,
            _ => false,
        }
    }
}

/// An OpenAI-like chat completion endpoint.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            initial_backoff: Duration::ZERO,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{last} (after {attempts} attempt(s))")]
pub struct RetryExhausted {
    pub attempts: u32,
    pub last: BackendError,
}

/// Calls `backend` with exponential backoff on retryable failures.
pub fn backend_complete(
    request: &CompletionRequest,
    backend: &dyn CompletionBackend,
    retry: RetryPolicy,
) -> Result<CompletionResponse, RetryExhausted> {
    let max = retry.max_attempts.max(1);
    let mut delay = retry.initial_backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(request) {
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_retryable() && attempt < max => {
                if !delay.is_zero() {
                    thread::sleep(delay);
                }
                delay = delay.saturating_mul(2);
            }
            Err(last) => {
                return Err(RetryExhausted {
                    attempts: attempt,
                    last,
                })
            }
        }
    }
}

/// One scripted backend reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Step {
    Text(String),
    Call(ToolCall),
    /// A transient transport failure.
    Fail(String),
}

impl Step {
    pub fn text(s: impl Into<String>) -> Self {
        Step::Text(s.into())
    }
}

/// Replays fixed steps in order, each exactly once.
///
/// Steps live in named lanes. A request is routed to the first lane that exists among
/// `"<agent>@<model>"`, `"<agent>"`, `"<model>"` and the default lane `""`, so several
/// agents can share one backend deterministically even when they run concurrently.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    lanes: Mutex<BTreeMap<String, VecDeque<Step>>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Lanes { lanes: BTreeMap<String, Vec<Step>> },
    Default(Vec<Step>),
    #[default]
    Empty,
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// A backend with a single default lane.
    pub fn from_steps(steps: impl IntoIterator<Item = Step>) -> Self {
        Self::new().with_lane("", steps)
    }

    pub fn with_lane(self, lane: impl Into<String>, steps: impl IntoIterator<Item = Step>) -> Self {
        self.push_lane(lane, steps);
        self
    }

    /// Appends steps to a lane, creating it if needed.
    pub fn push_lane(&self, lane: impl Into<String>, steps: impl IntoIterator<Item = Step>) {
        self.lanes
            .lock()
            .expect("script lock")
            .entry(lane.into())
            .or_default()
            .extend(steps);
    }

    /// Loads a JSON script: either a bare array of steps (default lane) or
    /// `{"lanes": {"<lane>": [steps...]}}`.
    pub fn from_json(json: &str) -> Result<Self, BackendError> {
        let file: ScriptFile =
            serde_json::from_str(json).map_err(|e| BackendError::Config(format!("script: {e}")))?;
        let backend = Self::new();
        match file {
            ScriptFile::Lanes { lanes } => {
                for (lane, steps) in lanes {
                    backend.push_lane(lane, steps);
                }
            }
            ScriptFile::Default(steps) => backend.push_lane("", steps),
            ScriptFile::Empty => {}
        }
        Ok(backend)
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::Config(format!("script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Steps not yet consumed, summed over all lanes.
    pub fn remaining(&self) -> usize {
        self.lanes.lock().expect("script lock").values().map(VecDeque::len).sum()
    }

    fn route(&self, request: &CompletionRequest) -> String {
        let lanes = self.lanes.lock().expect("script lock");
        let mut candidates = Vec::with_capacity(4);
        if let Some(agent) = &request.agent {
            candidates.push(format!("{agent}@{}", request.model));
            candidates.push(agent.clone());
        }
        candidates.push(request.model.clone());
        candidates
            .into_iter()
            .find(|c| lanes.contains_key(c))
            .unwrap_or_default()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let lane = self.route(request);
        let step = self
            .lanes
            .lock()
            .expect("script lock")
            .get_mut(&lane)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| BackendError::ScriptExhausted(lane.clone()))?;
        match step {
            Step::Text(t) => Ok(CompletionResponse::Text(t)),
            Step::Call(c) => Ok(CompletionResponse::ToolCall(c)),
            Step::Fail(msg) => Err(BackendError::Transport(msg)),
        }
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<CompletionResponse, BackendError> + Send + Sync;

/// A backend computed by a closure; useful for programmatic doubles such as a vote counter.
pub struct FnBackend {
    f: Box<Responder>,
}

impl FnBackend {
    pub fn new(
        f: impl Fn(&CompletionRequest) -> Result<CompletionResponse, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self { f: Box::new(f) }
    }
}

impl CompletionBackend for FnBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        (self.f)(request)
    }
}

/// Sends requests whose `agent` matches a name to a dedicated backend, everything else to
/// the fallback.
pub struct RouterBackend {
    routes: Vec<(String, Box<dyn CompletionBackend>)>,
    fallback: Box<dyn CompletionBackend>,
}

impl RouterBackend {
    pub fn new(fallback: impl CompletionBackend + 'static) -> Self {
        Self {
            routes: Vec::new(),
            fallback: Box::new(fallback),
        }
    }

    pub fn route(mut self, agent: impl Into<String>, backend: impl CompletionBackend + 'static) -> Self {
        self.routes.push((agent.into(), Box::new(backend)));
        self
    }
}

impl CompletionBackend for RouterBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let target = request.agent.as_deref().and_then(|agent| {
            self.routes
                .iter()
                .find(|(name, _)| name == agent)
                .map(|(_, b)| b.as_ref())
        });
        target.unwrap_or(self.fallback.as_ref()).complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::EngineMode;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn req(agent: Option<&str>, model: &str) -> CompletionRequest {
        CompletionRequest {
            model: model.into(),
            messages: vec![],
            tools: vec![],
            mode: EngineMode::Transformed,
            agent: agent.map(str::to_string),
        }
    }

    #[test]
    fn scripted_queue_semantics() {
        let b = ScriptedBackend::from_steps([Step::text("hi")]);
        assert_eq!(
            b.complete(&req(None, "m")).unwrap(),
            CompletionResponse::Text("hi".into())
        );
        let err = b.complete(&req(None, "m")).unwrap_err();
        assert_eq!(err.code(), "E_SCRIPT_EXHAUSTED");
    }

    #[test]
    fn lanes_route_by_agent_then_model() {
        let b = ScriptedBackend::new()
            .with_lane("Solver@gpt", [Step::text("a")])
            .with_lane("Solver", [Step::text("b")])
            .with_lane("claude", [Step::text("c")])
            .with_lane("", [Step::text("d")]);
        let t = |r| match b.complete(&r).unwrap() {
            CompletionResponse::Text(t) => t,
            _ => unreachable!(),
        };
        assert_eq!(t(req(Some("Solver"), "gpt")), "a");
        assert_eq!(t(req(Some("Solver"), "other")), "b");
        assert_eq!(t(req(Some("X"), "claude")), "c");
        assert_eq!(t(req(None, "zzz")), "d");
        assert_eq!(b.remaining(), 0);
    }

    #[test]
    fn script_json_forms() {
        let b = ScriptedBackend::from_json(r#"[{"text":"x"},{"call":{"tool_name":"f","arguments":{"a":"1"}}}]"#)
            .unwrap();
        assert_eq!(b.remaining(), 2);
        let b = ScriptedBackend::from_json(r#"{"lanes":{"A":[{"text":"x"}],"B":[{"fail":"boom"}]}}"#).unwrap();
        assert_eq!(b.remaining(), 2);
        assert!(b.complete(&req(Some("B"), "m")).unwrap_err().is_retryable());
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
    }

    impl CompletionBackend for Flaky {
        fn complete(&self, _: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err(BackendError::Status {
                    status: 500,
                    body: String::new(),
                })
            } else {
                Ok(CompletionResponse::Text("ok".into()))
            }
        }
    }

    #[test]
    fn retry_recovers_and_exhausts() {
        let b = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 2,
        };
        assert!(backend_complete(&req(None, "m"), &b, RetryPolicy::immediate(3)).is_ok());

        let b = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 3,
        };
        let err = backend_complete(&req(None, "m"), &b, RetryPolicy::immediate(3)).unwrap_err();
        assert_eq!(err.attempts, 3);
        assert_eq!(err.last.code(), "E_BACKEND");
        assert_eq!(b.calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn non_retryable_fails_fast() {
        let b = ScriptedBackend::new();
        let err = backend_complete(&req(None, "m"), &b, RetryPolicy::immediate(5)).unwrap_err();
        assert_eq!(err.attempts, 1);
    }
}
