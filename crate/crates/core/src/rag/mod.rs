//! A document store with vector retrieval: text files are split into token windows,
//! embedded, persisted per collection, and ranked by exhaustive cosine scan.
//!
//! Collections live under `<root>/<collection>/` as `manifest.json` plus `chunks.bin`;
//! the byte layout is described in `docs/formats.md`.

mod answer;
mod embed;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::is_identifier;

pub use answer::{can_answer_verdict, rag_answer_loop, RagAnswer, RagLimits, RagTools, RagVerdict};
pub use embed::{cosine, Embedder, HashingEmbedder, HttpEmbedder, DEFAULT_HASH_DIM};

pub const DEFAULT_CHUNK_SIZE: usize = 4096;
pub const DEFAULT_TOP_K: usize = 6;
pub const SUPPORTED_EXTENSIONS: [&str; 2] = ["txt", "md"];

const MAGIC: &[u8; 4] = b"AGRC";
const FORMAT_VERSION: u32 = 1;
const MANIFEST_FORMAT: &str = "agentos-rag/1";

#[derive(Debug, Error)]
pub enum RagError {
    #[error("E_IO: {0}")]
    Io(String),
    #[error("E_EMPTY: {0}")]
    Empty(String),
    #[error("E_NOT_FOUND: no collection named {0:?}")]
    NotFound(String),
    #[error("E_ARGS: {0}")]
    Args(String),
    #[error("E_DIMENSION: expected vectors of dimension {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("E_FORMAT: {0}")]
    Format(String),
    #[error("E_EMBEDDER: {0}")]
    Embedder(String),
    #[error("{0}")]
    Engine(#[from] crate::engine::EngineError),
}

impl RagError {
    pub fn code(&self) -> &'static str {
        match self {
            RagError::Io(_) => "E_IO",
            RagError::Empty(_) => "E_EMPTY",
            RagError::NotFound(_) => "E_NOT_FOUND",
            RagError::Args(_) => "E_ARGS",
            RagError::Dimension { .. } => "E_DIMENSION",
            RagError::Format(_) => "E_FORMAT",
            RagError::Embedder(_) => "E_EMBEDDER",
            RagError::Engine(e) => e.code(),
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> RagError {
    RagError::Io(format!("{}: {e}", path.display()))
}

/// Splits `text` into windows of `chunk_size` whitespace tokens, each rejoined with single spaces.
///
/// # Panics
/// If `chunk_size` is zero.
pub fn chunk_text(text: &str, chunk_size: usize) -> Vec<String> {
    assert!(chunk_size >= 1, "chunk_size must be at least 1");
    let tokens: Vec<&str> = text.split_whitespace().collect();
    tokens.chunks(chunk_size).map(|w| w.join(" ")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub doc_id: String,
    pub ordinal: u32,
    pub token_count: u32,
    pub text: String,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hit {
    pub chunk: Chunk,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub files_seen: usize,
    pub files_ingested: usize,
    pub files_skipped: usize,
    pub chunks_written: usize,
}

/// One collection held in memory. Chunks are kept sorted by (doc_id, ordinal).
#[derive(Debug, Clone, PartialEq)]
pub struct Collection {
    pub name: String,
    pub dimension: usize,
    pub embedder: String,
    pub chunk_size: usize,
    chunks: Vec<Chunk>,
}

impl Collection {
    pub fn new(name: &str, embedder: &dyn Embedder, chunk_size: usize) -> Result<Self, RagError> {
        if !is_identifier(name) {
            return Err(RagError::Args(format!("collection name {name:?} is not an identifier")));
        }
        if chunk_size == 0 {
            return Err(RagError::Args("chunk_size must be at least 1".into()));
        }
        Ok(Self {
            name: name.to_string(),
            dimension: embedder.dimension(),
            embedder: embedder.id(),
            chunk_size,
            chunks: Vec::new(),
        })
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    /// The chunks of one document in ordinal order.
    pub fn document(&self, doc_id: &str) -> Vec<&Chunk> {
        self.chunks.iter().filter(|c| c.doc_id == doc_id).collect()
    }

    fn check_dim(&self, embedder: &dyn Embedder) -> Result<(), RagError> {
        if embedder.dimension() != self.dimension {
            return Err(RagError::Dimension {
                expected: self.dimension,
                found: embedder.dimension(),
            });
        }
        Ok(())
    }

    /// Replaces every chunk of `doc_id` with a fresh chunking of `text`. Returns the chunk count.
    pub fn put_document(&mut self, doc_id: &str, text: &str, embedder: &dyn Embedder) -> Result<usize, RagError> {
        self.check_dim(embedder)?;
        let mut fresh = Vec::new();
        for (i, piece) in chunk_text(text, self.chunk_size).into_iter().enumerate() {
            let vector = embedder.embed(&piece)?;
            if vector.len() != self.dimension {
                return Err(RagError::Dimension {
                    expected: self.dimension,
                    found: vector.len(),
                });
            }
            fresh.push(Chunk {
                doc_id: doc_id.to_string(),
                ordinal: i as u32,
                token_count: piece.split_whitespace().count() as u32,
                text: piece,
                vector,
            });
        }
        let n = fresh.len();
        self.chunks.retain(|c| c.doc_id != doc_id);
        self.chunks.extend(fresh);
        self.chunks
            .sort_by(|a, b| a.doc_id.cmp(&b.doc_id).then(a.ordinal.cmp(&b.ordinal)));
        Ok(n)
    }

    /// Top `k` chunks by cosine similarity to `query`; ties go to the smaller (doc_id, ordinal).
    pub fn query(&self, query: &str, k: usize, embedder: &dyn Embedder) -> Result<Vec<Hit>, RagError> {
        if k == 0 {
            return Err(RagError::Args("k must be positive".into()));
        }
        if self.chunks.is_empty() {
            return Err(RagError::Empty(format!("collection {:?} holds no chunks", self.name)));
        }
        self.check_dim(embedder)?;
        let q = embedder.embed(query)?;
        let mut scored: Vec<(f64, usize)> = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (cosine(&q, &c.vector), i))
            .collect();
        // Chunks are already in (doc_id, ordinal) order, so the index settles ties.
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored
            .into_iter()
            .take(k)
            .map(|(score, i)| Hit {
                chunk: self.chunks[i].clone(),
                score,
            })
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format: String,
    collection: String,
    dimension: usize,
    embedder: String,
    chunk_size: usize,
    chunks: usize,
    documents: BTreeMap<String, usize>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<(), RagError> {
    let v = u32::try_from(v).map_err(|_| RagError::Format(format!("{v} does not fit in 32 bits")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

fn encode_chunks(c: &Collection) -> Result<Vec<u8>, RagError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    put_u32(&mut out, c.dimension)?;
    put_u32(&mut out, c.chunks.len())?;
    for ch in &c.chunks {
        put_u32(&mut out, ch.doc_id.len())?;
        out.extend_from_slice(ch.doc_id.as_bytes());
        out.extend_from_slice(&ch.ordinal.to_le_bytes());
        out.extend_from_slice(&ch.token_count.to_le_bytes());
        for x in &ch.vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
        put_u32(&mut out, ch.text.len())?;
        out.extend_from_slice(ch.text.as_bytes());
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], RagError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| RagError::Format(format!("chunk file truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, RagError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn string(&mut self) -> Result<String, RagError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| RagError::Format("chunk text is not UTF-8".into()))
    }
}

fn decode_chunks(bytes: &[u8]) -> Result<(usize, Vec<Chunk>), RagError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(RagError::Format("chunk file has the wrong magic bytes".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(RagError::Format(format!("unsupported chunk file version {version}")));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let mut chunks = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let doc_id = r.string()?;
        let ordinal = r.u32()?;
        let token_count = r.u32()?;
        let vector = r
            .take(dim * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        let text = r.string()?;
        chunks.push(Chunk {
            doc_id,
            ordinal,
            token_count,
            text,
            vector,
        });
    }
    if r.pos != bytes.len() {
        return Err(RagError::Format("trailing bytes after the last chunk".into()));
    }
    Ok((dim, chunks))
}

/// Collections persisted under one root directory.
#[derive(Debug)]
pub struct VectorStore {
    root: PathBuf,
    writers: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl VectorStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, RagError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| io_err(&root, e))?;
        Ok(Self {
            root,
            writers: Mutex::default(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, collection: &str) -> PathBuf {
        self.root.join(collection)
    }

    pub fn collections(&self) -> Result<Vec<String>, RagError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.root).map_err(|e| io_err(&self.root, e))? {
            let entry = entry.map_err(|e| io_err(&self.root, e))?;
            if entry.path().join("manifest.json").is_file() {
                out.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn load(&self, collection: &str) -> Result<Collection, RagError> {
        if !is_identifier(collection) {
            return Err(RagError::Args(format!("collection name {collection:?} is not an identifier")));
        }
        let dir = self.dir(collection);
        let mpath = dir.join("manifest.json");
        let mtext = match fs::read_to_string(&mpath) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(RagError::NotFound(collection.to_string())),
            Err(e) => return Err(io_err(&mpath, e)),
        };
        let manifest: Manifest =
            serde_json::from_str(&mtext).map_err(|e| RagError::Format(format!("{}: {e}", mpath.display())))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(RagError::Format(format!("unknown manifest format {:?}", manifest.format)));
        }
        let cpath = dir.join("chunks.bin");
        let bytes = fs::read(&cpath).map_err(|e| io_err(&cpath, e))?;
        let (dim, chunks) = decode_chunks(&bytes)?;
        if dim != manifest.dimension || chunks.len() != manifest.chunks {
            return Err(RagError::Format(format!(
                "{collection}: manifest and chunk file disagree"
            )));
        }
        Ok(Collection {
            name: manifest.collection,
            dimension: dim,
            embedder: manifest.embedder,
            chunk_size: manifest.chunk_size,
            chunks,
        })
    }

    pub fn save(&self, c: &Collection) -> Result<(), RagError> {
        let dir = self.dir(&c.name);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let mut documents = BTreeMap::new();
        for ch in &c.chunks {
            *documents.entry(ch.doc_id.clone()).or_insert(0) += 1;
        }
        let manifest = Manifest {
            format: MANIFEST_FORMAT.into(),
            collection: c.name.clone(),
            dimension: c.dimension,
            embedder: c.embedder.clone(),
            chunk_size: c.chunk_size,
            chunks: c.chunks.len(),
            documents,
        };
        write_atomic(&dir.join("chunks.bin"), &encode_chunks(c)?)?;
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&dir.join("manifest.json"), json.as_bytes())
    }

    fn writer(&self, collection: &str) -> Arc<Mutex<()>> {
        self.writers
            .lock()
            .expect("writer map")
            .entry(collection.to_string())
            .or_default()
            .clone()
    }

    /// Ingests a `.txt`/`.md` file, a directory (recursively) or a zip archive.
    pub fn ingest(
        &self,
        path: &Path,
        collection: &str,
        chunk_size: usize,
        embedder: &dyn Embedder,
    ) -> Result<IngestReport, RagError> {
        let lock = self.writer(collection);
        let _guard = lock.lock().expect("collection writer");
        let mut coll = match self.load(collection) {
            Ok(c) => {
                if c.chunk_size != chunk_size {
                    return Err(RagError::Args(format!(
                        "collection {collection:?} uses chunk_size {}, not {chunk_size}",
                        c.chunk_size
                    )));
                }
                c
            }
            Err(RagError::NotFound(_)) => Collection::new(collection, embedder, chunk_size)?,
            Err(e) => return Err(e),
        };
        coll.check_dim(embedder)?;

        let mut report = IngestReport::default();
        let docs = collect_documents(path, &mut report)?;
        if docs.is_empty() {
            return Err(RagError::Empty(format!("no .txt or .md files under {}", path.display())));
        }
        for (doc_id, text) in docs {
            report.chunks_written += coll.put_document(&doc_id, &text, embedder)?;
        }
        self.save(&coll)?;
        Ok(report)
    }

    pub fn query(
        &self,
        collection: &str,
        query: &str,
        k: usize,
        embedder: &dyn Embedder,
    ) -> Result<Vec<Hit>, RagError> {
        self.load(collection)?.query(query, k, embedder)
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), RagError> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

fn supported(name: &str) -> bool {
    Path::new(name)
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| SUPPORTED_EXTENSIONS.iter().any(|s| s.eq_ignore_ascii_case(e)))
}

fn is_zip(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("zip"))
}

/// Reads every supported document under `path`, counting what it sees. Zip archives are
/// opened wherever they appear; their entries get ids of the form `archive!/entry`.
fn collect_documents(path: &Path, report: &mut IngestReport) -> Result<Vec<(String, String)>, RagError> {
    let meta = fs::metadata(path).map_err(|e| io_err(path, e))?;
    let mut docs = Vec::new();
    if meta.is_dir() {
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in walkdir::WalkDir::new(path).sort_by_file_name() {
            let entry = entry.map_err(|e| io_err(path, e))?;
            if entry.file_type().is_file() {
                files.push(entry.into_path());
            }
        }
        for f in files {
            read_file(&f, report, &mut docs)?;
        }
    } else {
        read_file(path, report, &mut docs)?;
    }
    Ok(docs)
}

fn read_file(path: &Path, report: &mut IngestReport, docs: &mut Vec<(String, String)>) -> Result<(), RagError> {
    let id = path.to_string_lossy().replace('\\', "/");
    if is_zip(path) {
        let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
        let mut archive = zip::ZipArchive::new(file).map_err(|e| io_err(path, e))?;
        let mut names: Vec<String> = archive.file_names().map(str::to_string).collect();
        names.sort();
        for name in names {
            let mut entry = archive.by_name(&name).map_err(|e| io_err(path, e))?;
            if entry.is_dir() {
                continue;
            }
            report.files_seen += 1;
            if !supported(&name) {
                report.files_skipped += 1;
                continue;
            }
            let mut bytes = Vec::new();
            entry.read_to_end(&mut bytes).map_err(|e| io_err(path, e))?;
            report.files_ingested += 1;
            docs.push((format!("{id}!/{name}"), String::from_utf8_lossy(&bytes).into_owned()));
        }
        return Ok(());
    }
    report.files_seen += 1;
    if !supported(&id) {
        report.files_skipped += 1;
        return Ok(());
    }
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    report.files_ingested += 1;
    docs.push((id, String::from_utf8_lossy(&bytes).into_owned()));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunk_arithmetic() {
        let ten = (0..10).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let sizes: Vec<usize> = chunk_text(&ten, 4).iter().map(|c| c.split(' ').count()).collect();
        assert_eq!(sizes, [4, 4, 2]);
        assert!(chunk_text("", 4).is_empty());
        assert!(chunk_text(" \n\t ", 4).is_empty());
    }

    #[test]
    fn chunk_file_round_trips() {
        let e = HashingEmbedder::new(8);
        let mut c = Collection::new("notes", &e, 3).unwrap();
        c.put_document("b.txt", "one two three four", &e).unwrap();
        c.put_document("a.md", "alpha", &e).unwrap();
        let bytes = encode_chunks(&c).unwrap();
        let (dim, chunks) = decode_chunks(&bytes).unwrap();
        assert_eq!(dim, 8);
        assert_eq!(chunks, c.chunks);
        assert_eq!(chunks[0].doc_id, "a.md");
        assert!(decode_chunks(&bytes[..bytes.len() - 1]).is_err());
    }
}
