//! Line-delimited JSON run traces shared by workflow runs, pipelines and CLI sessions.
//!
//! Field order is fixed by the struct layout so traces can be compared byte for byte.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub seq: u64,
    pub phase: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u32>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl TraceRecord {
    pub fn new(phase: impl Into<String>) -> Self {
        Self {
            seq: 0,
            phase: phase.into(),
            event: None,
            action: None,
            key: None,
            counters: BTreeMap::new(),
            detail: String::new(),
        }
    }

    pub fn event(mut self, event: impl Into<String>) -> Self {
        self.event = Some(event.into());
        self
    }

    pub fn action(mut self, action: impl Into<String>) -> Self {
        self.action = Some(action.into());
        self
    }

    pub fn key(mut self, key: impl Into<String>) -> Self {
        self.key = Some(key.into());
        self
    }

    pub fn counters(mut self, counters: BTreeMap<String, u32>) -> Self {
        self.counters = counters;
        self
    }

    pub fn detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = detail.into();
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `record`, assigning the next sequence number.
    pub fn push(&mut self, mut record: TraceRecord) {
        record.seq = self.records.len() as u64;
        self.records.push(record);
    }

    /// Appends another trace's records, renumbering them.
    pub fn extend(&mut self, other: Trace) {
        for r in other.records {
            self.push(r);
        }
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records in `phase` for `event`, in order.
    pub fn filter<'a>(&'a self, phase: &'a str, event: &'a str) -> impl Iterator<Item = &'a TraceRecord> + 'a {
        self.records
            .iter()
            .filter(move |r| r.phase == phase && r.event.as_deref() == Some(event))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_jsonl())
    }

    pub fn parse_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<TraceRecord>, _>>()?;
        Ok(Self { records })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_order_is_stable() {
        let mut t = Trace::new();
        let mut counters = BTreeMap::new();
        counters.insert("a->b".to_string(), 2);
        t.push(TraceRecord::new("commit").event("e").action("GOTO").key("k").counters(counters).detail("x"));
        t.push(TraceRecord::new("terminal"));
        assert_eq!(
            t.to_jsonl(),
            "{\"seq\":0,\"phase\":\"commit\",\"event\":\"e\",\"action\":\"GOTO\",\"key\":\"k\",\"counters\":{\"a->b\":2},\"detail\":\"x\"}\n{\"seq\":1,\"phase\":\"terminal\"}\n"
        );
        assert_eq!(Trace::parse_jsonl(&t.to_jsonl()).unwrap(), t);
    }
}
