//! Small helpers over `roxmltree` for strict element-only documents, plus a writer.

use roxmltree::{Document, Node, ParsingOptions};

use super::FormError;

pub(crate) fn parse_document(xml: &str) -> Result<Document<'_>, FormError> {
    // DTDs are refused outright, which also rules out entity expansion.
    let opts = ParsingOptions {
        allow_dtd: false,
        ..ParsingOptions::default()
    };
    Document::parse_with_options(xml, opts).map_err(|e| {
        let pos = e.pos();
        FormError::Xml {
            message: e.to_string(),
            line: pos.row,
            column: pos.col,
        }
    })
}

/// Element children of `node`; non-whitespace text between them is a schema error.
pub(crate) fn elements<'a, 'i>(node: Node<'a, 'i>, path: &str) -> Result<Vec<Node<'a, 'i>>, FormError> {
    let mut out = Vec::new();
    for child in node.children() {
        if child.is_element() {
            out.push(child);
        } else if child.is_text() && !child.text().unwrap_or("").trim().is_empty() {
            return Err(FormError::schema(path, "unexpected text content"));
        }
    }
    Ok(out)
}

/// Trimmed text of a leaf element.
pub(crate) fn leaf_text(node: Node<'_, '_>, path: &str) -> Result<String, FormError> {
    if node.children().any(|c| c.is_element()) {
        return Err(FormError::schema(path, "expected text, found child elements"));
    }
    let text: String = node
        .children()
        .filter(|c| c.is_text())
        .filter_map(|c| c.text())
        .collect();
    Ok(text.trim().to_string())
}

pub(crate) fn tag<'a>(node: &'a Node<'_, '_>) -> &'a str {
    node.tag_name().name()
}

/// Tracks sibling positions to build `/a/b[2]`-style paths.
#[derive(Default)]
pub(crate) struct Positions(std::collections::HashMap<String, usize>);

impl Positions {
    pub fn next(&mut self, parent: &str, name: &str) -> String {
        let n = self.0.entry(name.to_string()).or_insert(0);
        *n += 1;
        format!("{parent}/{name}[{n}]")
    }
}

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            _ => out.push(c),
        }
    }
    out
}

fn escape_attr(text: &str) -> String {
    escape(text).replace('"', "&quot;")
}

/// Indented element writer.
pub(crate) struct XmlWriter {
    out: String,
    depth: usize,
}

impl XmlWriter {
    pub fn new() -> Self {
        Self {
            out: String::new(),
            depth: 0,
        }
    }

    fn indent(&mut self) {
        for _ in 0..self.depth {
            self.out.push_str("    ");
        }
    }

    pub fn open(&mut self, name: &str) {
        self.open_attr(name, None);
    }

    pub fn open_attr(&mut self, name: &str, attr: Option<(&str, &str)>) {
        self.indent();
        match attr {
            Some((k, v)) => self.out.push_str(&format!("<{name} {k}=\"{}\">\n", escape_attr(v))),
            None => self.out.push_str(&format!("<{name}>\n")),
        }
        self.depth += 1;
    }

    pub fn close(&mut self, name: &str) {
        self.depth -= 1;
        self.indent();
        self.out.push_str(&format!("</{name}>\n"));
    }

    pub fn leaf(&mut self, name: &str, text: &str) {
        self.indent();
        self.out.push_str(&format!("<{name}>{}</{name}>\n", escape(text)));
    }

    pub fn finish(self) -> String {
        self.out
    }
}
