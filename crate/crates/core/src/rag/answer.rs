//! The retrieve → judge → rewrite → answer loop, and the store exposed as agent tools.

use std::path::{Component, Path, PathBuf};

use crate::engine::{Engine, ParamSchema, ToolSchema};
use crate::kernel::ToolRunner;
use crate::message::{ToolCall, ToolResult};

use super::{Collection, Embedder, Hit, RagError, VectorStore, DEFAULT_CHUNK_SIZE, DEFAULT_TOP_K};

const CAN_ANSWER_SYSTEM: &str = "You decide whether the supplied documents contain enough information to \
answer the question. Reply with \"yes\" or \"no\" first, then at most one sentence of explanation.";
const MODIFY_QUERY_SYSTEM: &str = "The documents retrieved for a question were not sufficient. Write one new \
search query that targets the missing information. Reply with the query text only.";
const ANSWER_SYSTEM: &str = "Answer the question using only the supplied documents. Be brief and do not \
add facts the documents do not support.";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RagLimits {
    pub max_rewrites: usize,
    pub top_k: usize,
}

impl Default for RagLimits {
    fn default() -> Self {
        Self {
            max_rewrites: 2,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RagVerdict {
    Answer(String),
    /// No retrieval was judged sufficient; carries a summary of the last chunk set.
    Insufficient(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RagAnswer {
    pub verdict: RagVerdict,
    /// Every query used for retrieval, the original first.
    pub queries: Vec<String>,
}

impl RagAnswer {
    pub fn retrievals(&self) -> usize {
        self.queries.len()
    }
}

/// Reads a can-answer reply: affirmative when its first word is "yes".
pub fn can_answer_verdict(reply: &str) -> bool {
    reply
        .trim_start()
        .split(|c: char| !c.is_alphanumeric())
        .next()
        .is_some_and(|w| w.eq_ignore_ascii_case("yes"))
}

fn render_docs(hits: &[Hit]) -> String {
    let mut out = String::new();
    for (i, h) in hits.iter().enumerate() {
        out.push_str(&format!(
            "[{}] {}#{} (score {:.4})\n{}\n\n",
            i + 1,
            h.chunk.doc_id,
            h.chunk.ordinal,
            h.score,
            h.chunk.text
        ));
    }
    out
}

fn summarize(hits: &[Hit]) -> String {
    let mut out = String::from("The retrieved documents do not answer the question. Closest chunks:");
    for h in hits {
        let preview: String = h.chunk.text.chars().take(80).collect();
        out.push_str(&format!("\n- {}#{} ({:.4}): {preview}", h.chunk.doc_id, h.chunk.ordinal, h.score));
    }
    out
}

/// Retrieves for `query`, asks whether the chunks suffice, and rewrites the query up to
/// `limits.max_rewrites` times, so at most `1 + max_rewrites` retrievals happen.
pub fn rag_answer_loop(
    query: &str,
    collection: &Collection,
    embedder: &dyn Embedder,
    engine: &Engine,
    limits: RagLimits,
) -> Result<RagAnswer, RagError> {
    let mut queries = vec![query.to_string()];
    loop {
        let current = queries.last().expect("at least one query").clone();
        let hits = collection.query(&current, limits.top_k, embedder)?;
        let docs = render_docs(&hits);
        let prompt = format!("Question: {query}\n\nDocuments:\n{docs}");
        let reply = engine.complete_text(CAN_ANSWER_SYSTEM, &prompt, "", Some("can_answer"))?;
        if can_answer_verdict(&reply) {
            let answer = engine.complete_text(ANSWER_SYSTEM, &prompt, "", Some("answer_query"))?;
            return Ok(RagAnswer {
                verdict: RagVerdict::Answer(answer.trim().to_string()),
                queries,
            });
        }
        if queries.len() > limits.max_rewrites {
            return Ok(RagAnswer {
                verdict: RagVerdict::Insufficient(summarize(&hits)),
                queries,
            });
        }
        let rewrite_prompt = format!(
            "Question: {query}\nLast query: {current}\nWhy it fell short: {}\n\nDocuments found:\n{docs}",
            reply.trim()
        );
        let next = engine.complete_text(MODIFY_QUERY_SYSTEM, &rewrite_prompt, "", Some("modify_query"))?;
        let next = next.trim();
        queries.push(if next.is_empty() { current } else { next.to_string() });
    }
}

/// `save_raw_docs_to_vector_db` and `query_db` as agent tools, plus the three
/// language-model steps of the answer loop when an engine is attached.
pub struct RagTools<'a> {
    store: &'a VectorStore,
    embedder: &'a dyn Embedder,
    workspace: PathBuf,
    default_collection: String,
    chunk_size: usize,
    engine: Option<&'a Engine>,
}

impl<'a> RagTools<'a> {
    pub fn new(store: &'a VectorStore, embedder: &'a dyn Embedder, workspace: impl Into<PathBuf>) -> Self {
        Self {
            store,
            embedder,
            workspace: workspace.into(),
            default_collection: "documents".into(),
            chunk_size: DEFAULT_CHUNK_SIZE,
            engine: None,
        }
    }

    pub fn with_collection(mut self, name: impl Into<String>) -> Self {
        self.default_collection = name.into();
        self
    }

    pub fn with_chunk_size(mut self, n: usize) -> Self {
        self.chunk_size = n;
        self
    }

    pub fn with_engine(mut self, engine: &'a Engine) -> Self {
        self.engine = Some(engine);
        self
    }

    fn collection<'c>(&'c self, call: &'c ToolCall) -> &'c str {
        call.get("collection")
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .unwrap_or(&self.default_collection)
    }

    /// Resolves a workspace-relative path, refusing anything that climbs out of it.
    fn resolve(&self, rel: &str) -> Result<PathBuf, ToolResult> {
        let p = Path::new(rel.trim());
        if p.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(ToolResult::error("E_PATH", format!("{rel:?} must stay inside the workspace")));
        }
        Ok(self.workspace.join(p))
    }

    fn llm(&self, system: &str, prompt: String, step: &str) -> ToolResult {
        let Some(engine) = self.engine else {
            return ToolResult::error("E_UNKNOWN_TOOL", format!("{step} needs a language model"));
        };
        match engine.complete_text(system, &prompt, "", Some(step)) {
            Ok(text) => ToolResult::ok(text.trim()),
            Err(e) => ToolResult::error(e.code(), e.to_string()),
        }
    }
}

const LLM_TOOLS: [&str; 3] = ["can_answer", "modify_query", "answer_query"];

impl ToolRunner for RagTools<'_> {
    fn schema(&self, name: &str) -> Option<ToolSchema> {
        let p = ParamSchema::required;
        let o = ParamSchema::optional;
        if LLM_TOOLS.contains(&name) && self.engine.is_none() {
            return None;
        }
        Some(match name {
            "save_raw_docs_to_vector_db" => ToolSchema::new(
                name,
                "Split text documents (a .txt or .md file, a directory, or a zip) into chunks and store them for retrieval.",
            )
            .param(p("path", "Path inside the workspace."))
            .param(o("collection", "Collection name.")),
            "query_db" => ToolSchema::new(name, "Retrieve the stored chunks most similar to a query.")
                .param(p("query", "What to look for."))
                .param(o("collection", "Collection name."))
                .param(o("k", "How many chunks to return (default 6).")),
            "can_answer" => ToolSchema::new(name, "Judge whether the documents are enough to answer the question.")
                .param(p("query", "The question."))
                .param(p("documents", "Retrieved text.")),
            "modify_query" => ToolSchema::new(name, "Rewrite a query given what is already known.")
                .param(p("query", "The current query."))
                .param(o("known", "What has been found so far.")),
            "answer_query" => ToolSchema::new(name, "Answer the question from the supporting documents.")
                .param(p("query", "The question."))
                .param(p("documents", "Supporting text.")),
            _ => return None,
        })
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        let arg = |k: &str| call.get(k).unwrap_or_default();
        match call.tool_name.as_str() {
            "save_raw_docs_to_vector_db" => {
                let path = match self.resolve(arg("path")) {
                    Ok(p) => p,
                    Err(r) => return r,
                };
                match self.store.ingest(&path, self.collection(call), self.chunk_size, self.embedder) {
                    Ok(r) => ToolResult::ok(format!(
                        "Saved {} chunk(s) from {} file(s) to collection {:?}; skipped {} unsupported file(s).",
                        r.chunks_written,
                        r.files_ingested,
                        self.collection(call),
                        r.files_skipped
                    )),
                    Err(e) => ToolResult::error(e.code(), e.to_string()),
                }
            }
            "query_db" => {
                let k = match call.get("k").map(str::trim).filter(|s| !s.is_empty()) {
                    None => DEFAULT_TOP_K,
                    Some(s) => match s.parse::<usize>() {
                        Ok(k) => k,
                        Err(_) => return ToolResult::error("E_ARGS", format!("k = {s:?} is not a positive integer")),
                    },
                };
                match self.store.query(self.collection(call), arg("query"), k, self.embedder) {
                    Ok(hits) => ToolResult::ok(render_docs(&hits).trim_end()),
                    Err(e) => ToolResult::error(e.code(), e.to_string()),
                }
            }
            "can_answer" => self.llm(
                CAN_ANSWER_SYSTEM,
                format!("Question: {}\n\nDocuments:\n{}", arg("query"), arg("documents")),
                "can_answer",
            ),
            "modify_query" => self.llm(
                MODIFY_QUERY_SYSTEM,
                format!("Last query: {}\nKnown so far: {}", arg("query"), arg("known")),
                "modify_query",
            ),
            "answer_query" => self.llm(
                ANSWER_SYSTEM,
                format!("Question: {}\n\nDocuments:\n{}", arg("query"), arg("documents")),
                "answer_query",
            ),
            other => ToolResult::error("E_UNKNOWN_TOOL", format!("no tool named {other:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(can_answer_verdict("Yes, the second document says so."));
        assert!(can_answer_verdict("  yes"));
        assert!(!can_answer_verdict("No."));
        assert!(!can_answer_verdict("yesterday's news is missing"));
        assert!(!can_answer_verdict(""));
    }
}
