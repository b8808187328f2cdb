mod common;

use std::fs;
use std::io::Write;
use std::path::Path;

use agentos::engine::{ScriptedBackend, Step};
use agentos::kernel::ToolRunner;
use agentos::message::ToolCall;
use agentos::rag::{
    chunk_text, cosine, rag_answer_loop, Collection, Embedder, HashingEmbedder, RagLimits, RagTools, RagVerdict,
    VectorStore,
};
use common::{transformed, Counting};

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{}", i % 97)).collect::<Vec<_>>().join(" ")
}

fn write_zip(path: &Path, entries: &[(&str, &str)]) {
    let mut z = zip::ZipWriter::new(fs::File::create(path).unwrap());
    for (name, body) in entries {
        z.start_file(*name, zip::write::SimpleFileOptions::default()).unwrap();
        z.write_all(body.as_bytes()).unwrap();
    }
    z.finish().unwrap();
}

#[test]
fn long_file_splits_into_three_chunks() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("long.txt");
    fs::write(&file, words(9000)).unwrap();
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    let e = HashingEmbedder::default();
    let report = store.ingest(&file, "docs", 4096, &e).unwrap();
    assert_eq!(report.chunks_written, 3);
    let coll = store.load("docs").unwrap();
    let counts: Vec<u32> = coll.chunks().iter().map(|c| c.token_count).collect();
    assert_eq!(counts, [4096, 4096, 808]);
}

#[test]
fn zip_entries_with_unsupported_formats_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let zip_path = dir.path().join("bundle.zip");
    write_zip(
        &zip_path,
        &[("a.txt", "alpha beta"), ("b.txt", "gamma delta"), ("report.pdf", "%PDF-1.4")],
    );
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    let r = store.ingest(&zip_path, "docs", 16, &HashingEmbedder::default()).unwrap();
    assert_eq!((r.files_seen, r.files_ingested, r.files_skipped), (3, 2, 1));
    let coll = store.load("docs").unwrap();
    assert!(coll.chunks().iter().all(|c| c.doc_id.contains("bundle.zip!/")));
}

#[test]
fn reingest_replaces_rather_than_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs");
    fs::create_dir_all(docs.join("sub")).unwrap();
    fs::write(docs.join("one.md"), words(50)).unwrap();
    fs::write(docs.join("sub/two.txt"), words(30)).unwrap();
    fs::write(docs.join("image.png"), [0u8, 1, 2]).unwrap();
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    let e = HashingEmbedder::default();
    let first = store.ingest(&docs, "c", 20, &e).unwrap();
    let size = store.load("c").unwrap().len();
    let second = store.ingest(&docs, "c", 20, &e).unwrap();
    assert_eq!(first, second);
    assert_eq!(first.files_skipped, 1);
    assert_eq!(store.load("c").unwrap().len(), size);
    assert_eq!(size, 3 + 2);
}

#[test]
fn ingest_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("x.pdf"), "binary").unwrap();
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    let e = HashingEmbedder::default();
    assert_eq!(store.ingest(&dir.path().join("x.pdf"), "c", 8, &e).unwrap_err().code(), "E_EMPTY");
    assert_eq!(store.ingest(&dir.path().join("missing"), "c", 8, &e).unwrap_err().code(), "E_IO");
    assert_eq!(store.query("nothing_here", "q", 6, &e).unwrap_err().code(), "E_NOT_FOUND");
}

#[test]
fn query_clamps_and_finds_identical_text_first() {
    let e = HashingEmbedder::default();
    let mut c = Collection::new("c", &e, 5).unwrap();
    c.put_document("a", "the quick brown fox jumps over the lazy dog today", &e).unwrap();
    c.put_document("b", "chatgpt reached one hundred million users", &e).unwrap();
    let all = c.query("fox", 50, &e).unwrap();
    assert_eq!(all.len(), c.len());
    let target = &c.chunks()[2].text;
    let hits = c.query(target, 6, &e).unwrap();
    assert_eq!(&hits[0].chunk.text, target);
    assert!((hits[0].score - 1.0).abs() < 1e-6);
}

#[test]
fn ranking_matches_brute_force_on_a_random_store() {
    use rand::{rngs::StdRng, Rng, SeedableRng};
    let mut rng = StdRng::seed_from_u64(7);
    let e = HashingEmbedder::new(32);
    let mut c = Collection::new("c", &e, 4).unwrap();
    let vocab: Vec<String> = (0..40).map(|i| format!("v{i}")).collect();
    for d in 0..50 {
        let text: Vec<&str> = (0..16).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        c.put_document(&format!("doc{d:02}"), &text.join(" "), &e).unwrap();
    }
    assert_eq!(c.len(), 200);
    for _ in 0..20 {
        let q: Vec<&str> = (0..3).map(|_| vocab[rng.random_range(0..vocab.len())].as_str()).collect();
        let q = q.join(" ");
        let qv = e.embed(&q).unwrap();
        let mut oracle: Vec<(f64, &str, u32)> = c
            .chunks()
            .iter()
            .map(|ch| (cosine(&qv, &ch.vector), ch.doc_id.as_str(), ch.ordinal))
            .collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(b.1)).then(a.2.cmp(&b.2)));
        let got = c
            .query(&q, 6, &e)
            .unwrap()
            .iter()
            .map(|h| (h.chunk.doc_id.clone(), h.chunk.ordinal))
            .collect::<Vec<_>>();
        let got: Vec<(&str, u32)> = got.iter().map(|(d, o)| (d.as_str(), *o)).collect();
        let want: Vec<(&str, u32)> = oracle.iter().take(6).map(|o| (o.1, o.2)).collect();
        assert_eq!(got, want, "query {q}");
    }
}

#[test]
fn chunks_reconstruct_the_token_sequence() {
    for text in ["", "one", "a  b\tc\nd e f g", &words(1001)] {
        for size in [1, 2, 3, 7, 4096] {
            let chunks = chunk_text(text, size);
            let tokens: Vec<&str> = text.split_whitespace().collect();
            assert_eq!(chunks.join(" ").split_whitespace().collect::<Vec<_>>(), tokens);
            for (i, c) in chunks.iter().enumerate() {
                let n = c.split(' ').count();
                if i + 1 < chunks.len() {
                    assert_eq!(n, size);
                } else {
                    assert!(n >= 1 && n <= size);
                }
            }
        }
    }
}

#[test]
fn store_survives_reopen() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("n.txt"), words(33)).unwrap();
    let e = HashingEmbedder::default();
    let before = {
        let store = VectorStore::open(dir.path().join("db")).unwrap();
        store.ingest(&dir.path().join("n.txt"), "notes", 10, &e).unwrap();
        store.load("notes").unwrap()
    };
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    assert_eq!(store.load("notes").unwrap(), before);
    assert_eq!(store.collections().unwrap(), ["notes"]);
    assert!(dir.path().join("db/notes/manifest.json").is_file());
    assert!(dir.path().join("db/notes/chunks.bin").is_file());
}

fn tiny_collection(e: &HashingEmbedder) -> Collection {
    let mut c = Collection::new("news", e, 8).unwrap();
    c.put_document("ai.txt", "ChatGPT reached 100M users within two months of launch", e)
        .unwrap();
    c.put_document("other.txt", "The weather in spring is mild and rainy", e).unwrap();
    c
}

#[test]
fn answer_loop_answers_when_documents_suffice() {
    let e = HashingEmbedder::default();
    let backend = Counting::new(
        ScriptedBackend::new()
            .with_lane("can_answer", [Step::text("Yes, ai.txt says so.")])
            .with_lane("answer_query", [Step::text("ChatGPT")]),
    );
    let out = rag_answer_loop(
        "Which AI tool reached 100M users?",
        &tiny_collection(&e),
        &e,
        &transformed(backend.clone()),
        RagLimits::default(),
    )
    .unwrap();
    assert_eq!(out.verdict, RagVerdict::Answer("ChatGPT".into()));
    assert_eq!(out.retrievals(), 1);
    assert_eq!(backend.count(), 2);
}

#[test]
fn answer_loop_gives_up_after_the_rewrite_budget() {
    let e = HashingEmbedder::default();
    let backend = Counting::new(
        ScriptedBackend::new()
            .with_lane("can_answer", vec![Step::text("No."); 3])
            .with_lane("modify_query", [Step::text("ai users"), Step::text("launch growth")]),
    );
    let out = rag_answer_loop("Who won?", &tiny_collection(&e), &e, &transformed(backend.clone()), RagLimits::default())
        .unwrap();
    assert!(matches!(out.verdict, RagVerdict::Insufficient(ref s) if s.contains("ai.txt")));
    assert_eq!(out.queries, ["Who won?", "ai users", "launch growth"]);
    assert_eq!(backend.count(), 5);
}

#[test]
fn answer_loop_rewrites_once_then_answers() {
    let e = HashingEmbedder::default();
    let script = ScriptedBackend::new()
        .with_lane("can_answer", [Step::text("no"), Step::text("yes")])
        .with_lane("modify_query", [Step::text("ChatGPT users")])
        .with_lane("answer_query", [Step::text("ChatGPT")]);
    let backend = Counting::new(script);
    let out = rag_answer_loop("Which tool?", &tiny_collection(&e), &e, &transformed(backend.clone()), RagLimits::default())
        .unwrap();
    assert_eq!(out.retrievals(), 2);
    assert_eq!(backend.inner.remaining(), 0);
}

#[test]
fn store_tools_ingest_and_query_inside_the_workspace() {
    let dir = tempfile::tempdir().unwrap();
    let ws = dir.path().join("ws");
    fs::create_dir_all(&ws).unwrap();
    fs::write(ws.join("facts.md"), "ChatGPT reached 100M users quickly").unwrap();
    let store = VectorStore::open(dir.path().join("db")).unwrap();
    let e = HashingEmbedder::default();
    let tools = RagTools::new(&store, &e, &ws).with_chunk_size(256);
    assert!(tools.schema("can_answer").is_none());
    let saved = tools.invoke(&ToolCall::new("save_raw_docs_to_vector_db").arg("path", "facts.md"));
    assert!(saved.is_ok(), "{saved}");
    let found = tools.invoke(&ToolCall::new("query_db").arg("query", "100M users"));
    assert!(found.payload.contains("ChatGPT"), "{found}");
    let escape = tools.invoke(&ToolCall::new("save_raw_docs_to_vector_db").arg("path", "../secret.txt"));
    assert_eq!(escape.error_kind.as_deref(), Some("E_PATH"));
}
