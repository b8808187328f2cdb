//! Record/replay of completion traffic.
//!
//! File layout, one record per line:
//!
//! ```text
//! <sha256-hex of request key> SP <decimal byte length N> SP <N bytes of compact response JSON> LF
//! ```
//!
//! The request key is the compact JSON of `{model, messages, tools, mode}`. Several records
//! may share a digest; they replay in file order.

use std::collections::{HashMap, VecDeque};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::backend::{BackendError, CompletionBackend};
use super::{ChatMessage, CompletionRequest, CompletionResponse, EngineMode, ToolSchema};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CassetteMode {
    /// Only recorded responses are served; anything else is `E_CASSETTE_MISS`.
    Replay,
    /// Recorded responses are served first; misses go to the inner backend and are appended.
    Record,
}

#[derive(Serialize)]
struct DigestKey<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    tools: &'a [ToolSchema],
    mode: EngineMode,
}

pub fn request_digest(request: &CompletionRequest) -> String {
    let key = DigestKey {
        model: &request.model,
        messages: &request.messages,
        tools: &request.tools,
        mode: request.mode,
    };
    let bytes = serde_json::to_vec(&key).expect("request key serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn encode_record(digest: &str, response: &CompletionResponse) -> String {
    let json = serde_json::to_string(response).expect("response serializes");
    format!("{digest} {} {json}\n", json.len())
}

/// Parses a cassette file body into `(digest, response)` pairs in file order.
pub fn decode_records(text: &str) -> Result<Vec<(String, CompletionResponse)>, BackendError> {
    let mut out = Vec::new();
    let mut rest = text;
    let mut line_no = 0;
    while !rest.is_empty() {
        line_no += 1;
        let bad = |why: &str| BackendError::CassetteIo(format!("record {line_no}: {why}"));
        let (digest, after) = rest.split_once(' ').ok_or_else(|| bad("missing digest"))?;
        if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(bad("digest is not 64 hex chars"));
        }
        let (len, after) = after.split_once(' ').ok_or_else(|| bad("missing length"))?;
        let len: usize = len.parse().map_err(|_| bad("length is not a number"))?;
        if after.len() < len + 1 || !after.is_char_boundary(len) || after.as_bytes()[len] != b'\n' {
            return Err(bad("length does not match payload"));
        }
        let response: CompletionResponse =
            serde_json::from_str(&after[..len]).map_err(|e| bad(&e.to_string()))?;
        out.push((digest.to_string(), response));
        rest = &after[len + 1..];
    }
    Ok(out)
}

pub struct CassetteBackend {
    path: PathBuf,
    mode: CassetteMode,
    inner: Option<Arc<dyn CompletionBackend>>,
    records: Mutex<HashMap<String, VecDeque<CompletionResponse>>>,
}

impl CassetteBackend {
    pub fn replay(path: impl Into<PathBuf>) -> Result<Self, BackendError> {
        Self::open(path.into(), CassetteMode::Replay, None)
    }

    pub fn record(
        path: impl Into<PathBuf>,
        inner: Arc<dyn CompletionBackend>,
    ) -> Result<Self, BackendError> {
        Self::open(path.into(), CassetteMode::Record, Some(inner))
    }

    fn open(
        path: PathBuf,
        mode: CassetteMode,
        inner: Option<Arc<dyn CompletionBackend>>,
    ) -> Result<Self, BackendError> {
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && mode == CassetteMode::Record => {
                String::new()
            }
            Err(e) => return Err(BackendError::CassetteIo(format!("{}: {e}", path.display()))),
        };
        let mut records: HashMap<String, VecDeque<CompletionResponse>> = HashMap::new();
        for (digest, resp) in decode_records(&text)? {
            records.entry(digest).or_default().push_back(resp);
        }
        Ok(Self {
            path,
            mode,
            inner,
            records: Mutex::new(records),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn mode(&self) -> CassetteMode {
        self.mode
    }
}

impl CompletionBackend for CassetteBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, BackendError> {
        let digest = request_digest(request);
        // Held across the inner call so appends land in request order.
        let mut records = self.records.lock().expect("cassette lock");
        if let Some(resp) = records.get_mut(&digest).and_then(VecDeque::pop_front) {
            return Ok(resp);
        }
        let inner = match (self.mode, &self.inner) {
            (CassetteMode::Record, Some(inner)) => inner,
            _ => return Err(BackendError::CassetteMiss(digest)),
        };
        let resp = inner.complete(request)?;
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| BackendError::CassetteIo(format!("{}: {e}", self.path.display())))?;
        file.write_all(encode_record(&digest, &resp).as_bytes())
            .map_err(|e| BackendError::CassetteIo(e.to_string()))?;
        Ok(resp)
    }
}
