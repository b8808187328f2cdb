//! The transformed tool-use grammar.
//!
//! ```text
//! call     := "<function=" name ">" ws* (param ws*)* "</function>"
//! param    := "<parameter=" name ">" raw-value "</parameter>"
//! raw-value:= any text not containing "</parameter>" or "<function="
//! name     := [A-Za-z_][A-Za-z0-9_]*
//! ```
//!
//! Values are taken verbatim; there is no escape mechanism, so a value can
//! never contain the literal `</parameter>`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::ToolSchema;
use crate::message::{is_identifier, ToolCall};

pub const FUNCTION_OPEN: &str = "<function=";
pub const FUNCTION_CLOSE: &str = "</function>";
pub const PARAM_OPEN: &str = "<parameter=";
pub const PARAM_CLOSE: &str = "</parameter>";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Unclosed,
    MalformedName,
    DuplicateParameter,
    NestedFunction,
    UnexpectedText,
    NoCall,
}

impl ParseErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ParseErrorKind::Unclosed => "unclosed",
            ParseErrorKind::MalformedName => "malformed name",
            ParseErrorKind::DuplicateParameter => "duplicate parameter",
            ParseErrorKind::NestedFunction => "nested function tag",
            ParseErrorKind::UnexpectedText => "unexpected text inside call",
            ParseErrorKind::NoCall => "no call",
        }
    }
}

/// E_PARSE: byte offset into the input plus a reason.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("E_PARSE at byte {offset}: {kind_str}: {detail}", kind_str = .kind.as_str())]
pub struct ParseError {
    pub offset: usize,
    pub kind: ParseErrorKind,
    pub detail: String,
}

impl ParseError {
    fn new(offset: usize, kind: ParseErrorKind, detail: impl Into<String>) -> Self {
        Self {
            offset,
            kind,
            detail: detail.into(),
        }
    }
}

/// A successfully parsed call and whether non-whitespace text followed it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedCall {
    pub call: ToolCall,
    pub trailing_text: bool,
}

/// Renders a single call in the transformed grammar.
pub fn render_call(call: &ToolCall) -> String {
    let mut out = format!("{FUNCTION_OPEN}{}>", call.tool_name);
    for (key, value) in &call.arguments {
        let _ = write!(out, "{PARAM_OPEN}{key}>{value}{PARAM_CLOSE}");
    }
    out.push_str(FUNCTION_CLOSE);
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("E_EMPTY: no tool schemas to render")]
pub struct EmptySchemaList;

/// Deterministic prompt text describing every tool and its call template, in input order.
pub fn render_transformed_schema(tools: &[ToolSchema]) -> Result<String, EmptySchemaList> {
    if tools.is_empty() {
        return Err(EmptySchemaList);
    }
    let mut out = String::new();
    out.push_str("# Tool calling\n");
    out.push_str("To use a tool, reply with exactly one call written as XML:\n");
    out.push_str("<function=TOOL_NAME><parameter=PARAM_NAME>value</parameter></function>\n");
    out.push_str("Parameter values are copied verbatim. Only one call per reply is executed.\n");
    out.push_str("When you have the final answer, reply with plain text and no call.\n\n");
    out.push_str("# Available tools\n");
    for tool in tools {
        let _ = writeln!(out, "\n## {}", tool.name);
        if !tool.description.is_empty() {
            let _ = writeln!(out, "{}", tool.description.trim());
        }
        if tool.parameters.is_empty() {
            out.push_str("Parameters: none\n");
        } else {
            out.push_str("Parameters:\n");
            for p in &tool.parameters {
                let req = if p.required { "required" } else { "optional" };
                let _ = writeln!(out, "- {} ({req}): {}", p.name, p.description.trim());
            }
        }
        let _ = write!(out, "Template: {FUNCTION_OPEN}{}>", tool.name);
        for p in &tool.parameters {
            let _ = write!(out, "{PARAM_OPEN}{}>value{PARAM_CLOSE}", p.name);
        }
        out.push_str(FUNCTION_CLOSE);
        out.push('\n');
    }
    Ok(out)
}

/// Locates the first call opener in `text` and parses the call starting there.
///
/// Returns `None` when `text` contains no opener at all (i.e. it is a final answer).
pub fn find_call(text: &str) -> Option<Result<ParsedCall, ParseError>> {
    let start = text.find(FUNCTION_OPEN)?;
    Some(parse_at(text, start))
}

/// Parses a message that must contain a call. Leading prose before the opener is skipped.
pub fn parse_transformed_call(text: &str) -> Result<ParsedCall, ParseError> {
    find_call(text)
        .unwrap_or_else(|| Err(ParseError::new(0, ParseErrorKind::NoCall, "no <function= opener")))
}

fn parse_at(text: &str, start: usize) -> Result<ParsedCall, ParseError> {
    let name_start = start + FUNCTION_OPEN.len();
    let name_end = match text[name_start..].find('>') {
        Some(i) => name_start + i,
        None => {
            return Err(ParseError::new(
                start,
                ParseErrorKind::Unclosed,
                "function tag never closed with '>'",
            ))
        }
    };
    let name = &text[name_start..name_end];
    if !is_identifier(name) {
        return Err(ParseError::new(
            name_start,
            ParseErrorKind::MalformedName,
            format!("invalid function name {name:?}"),
        ));
    }

    let mut arguments = BTreeMap::new();
    let mut pos = name_end + 1;
    loop {
        pos = skip_ws(text, pos);
        let rest = &text[pos..];
        if rest.starts_with(FUNCTION_CLOSE) {
            pos += FUNCTION_CLOSE.len();
            break;
        }
        if rest.starts_with(FUNCTION_OPEN) {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::NestedFunction,
                "function tag opened inside another call",
            ));
        }
        if rest.is_empty() {
            return Err(ParseError::new(
                start,
                ParseErrorKind::Unclosed,
                format!("missing {FUNCTION_CLOSE}"),
            ));
        }
        if !rest.starts_with(PARAM_OPEN) {
            return Err(ParseError::new(
                pos,
                ParseErrorKind::UnexpectedText,
                "expected <parameter= or </function>",
            ));
        }
        let param_start = pos;
        let pname_start = pos + PARAM_OPEN.len();
        let pname_end = match text[pname_start..].find('>') {
            Some(i) => pname_start + i,
            None => {
                return Err(ParseError::new(
                    param_start,
                    ParseErrorKind::Unclosed,
                    "parameter tag never closed with '>'",
                ))
            }
        };
        let pname = &text[pname_start..pname_end];
        if !is_identifier(pname) {
            return Err(ParseError::new(
                pname_start,
                ParseErrorKind::MalformedName,
                format!("invalid parameter name {pname:?}"),
            ));
        }
        let value_start = pname_end + 1;
        let value_end = match text[value_start..].find(PARAM_CLOSE) {
            Some(i) => value_start + i,
            None => {
                return Err(ParseError::new(
                    param_start,
                    ParseErrorKind::Unclosed,
                    format!("parameter {pname:?} missing {PARAM_CLOSE}"),
                ))
            }
        };
        let value = &text[value_start..value_end];
        if let Some(i) = value.find(FUNCTION_OPEN) {
            return Err(ParseError::new(
                value_start + i,
                ParseErrorKind::NestedFunction,
                "function tag opened inside a parameter value",
            ));
        }
        if arguments.contains_key(pname) {
            return Err(ParseError::new(
                param_start,
                ParseErrorKind::DuplicateParameter,
                format!("parameter {pname:?} given twice"),
            ));
        }
        arguments.insert(pname.to_string(), value.to_string());
        pos = value_end + PARAM_CLOSE.len();
    }

    let trailing_text = !text[pos..].trim().is_empty();
    Ok(ParsedCall {
        call: ToolCall {
            tool_name: name.to_string(),
            arguments,
        },
        trailing_text,
    })
}

fn skip_ws(text: &str, mut pos: usize) -> usize {
    let bytes = text.as_bytes();
    while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
        pos += 1;
    }
    pos
}
