use std::time::Duration;

use serde_json::{json, Value};

use super::RagError;

/// Maps text to a fixed-dimension vector.
pub trait Embedder: Send + Sync {
    fn dimension(&self) -> usize;
    /// Stable identifier written to collection manifests.
    fn id(&self) -> String;
    fn embed(&self, text: &str) -> Result<Vec<f32>, RagError>;
}

pub const DEFAULT_HASH_DIM: usize = 256;

/// Feature hashing over lowercased whitespace tokens: each token adds ±1 to one
/// coordinate chosen by a 64-bit FNV-1a hash, and the result is L2-normalised.
/// Text without tokens embeds to the zero vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(DEFAULT_HASH_DIM)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("hashing-{}", self.dim)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, RagError> {
        let mut v = vec![0f32; self.dim];
        for token in text.split_whitespace() {
            let h = fnv1a(token.to_lowercase().as_bytes());
            let slot = (h % self.dim as u64) as usize;
            v[slot] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let norm = v.iter().map(|x| f64::from(*x) * f64::from(*x)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut v {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        Ok(v)
    }
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    api_base: String,
    api_key: String,
    model: String,
    dim: usize,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpEmbedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpEmbedder")
            .field("api_base", &self.api_base)
            .field("model", &self.model)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl HttpEmbedder {
    pub fn new(api_base: &str, api_key: &str, model: &str, dim: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        Self {
            api_base: api_base.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
            dim,
            agent,
        }
    }
}

impl Embedder for HttpEmbedder {
    fn dimension(&self) -> usize {
        self.dim
    }

    fn id(&self) -> String {
        format!("external:{}", self.model)
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, RagError> {
        let fail = |m: String| RagError::Embedder(m);
        let mut resp = self
            .agent
            .post(&format!("{}/embeddings", self.api_base))
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&json!({"model": self.model, "input": text}))
            .map_err(|e| fail(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().map_err(|e| fail(e.to_string()))?;
        if status >= 400 {
            return Err(fail(format!("HTTP {status}")));
        }
        let value: Value = serde_json::from_str(&body).map_err(|e| fail(e.to_string()))?;
        let v: Vec<f32> = value["data"][0]["embedding"]
            .as_array()
            .ok_or_else(|| fail("response has no data[0].embedding".into()))?
            .iter()
            .map(|x| x.as_f64().map(|f| f as f32))
            .collect::<Option<_>>()
            .ok_or_else(|| fail("embedding holds a non-number".into()))?;
        if v.len() != self.dim {
            return Err(RagError::Dimension {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(v)
    }
}

/// Cosine similarity; zero when either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0f64, 0f64, 0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}
