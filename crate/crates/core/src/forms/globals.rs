//! `{key}` placeholder scanning and substitution.
//!
//! A placeholder is `{` identifier `}`. `{{` and `}}` are escapes for literal braces; any
//! other brace is copied through unchanged, so JSON snippets in instructions survive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::is_identifier;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GlobalVar {
    pub key: String,
    #[serde(default)]
    pub description: String,
    pub value: String,
}

impl GlobalVar {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            description: String::new(),
            value: value.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("E_UNBOUND: no global variable bound to {{{0}}}")]
pub struct UnboundPlaceholder(pub String);

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

fn scan(text: &str, mut emit: impl FnMut(Piece<'_>) -> Result<(), UnboundPlaceholder>) -> Result<(), UnboundPlaceholder> {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut lit_start = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                emit(Piece::Literal(&text[lit_start..i + 1]))?;
                i += 2;
                lit_start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                emit(Piece::Literal(&text[lit_start..i + 1]))?;
                i += 2;
                lit_start = i;
            }
            b'{' => {
                let close = text[i + 1..].find('}').map(|j| i + 1 + j);
                match close {
                    Some(end) if is_identifier(&text[i + 1..end]) => {
                        emit(Piece::Literal(&text[lit_start..i]))?;
                        emit(Piece::Placeholder(&text[i + 1..end]))?;
                        i = end + 1;
                        lit_start = i;
                    }
                    _ => i += 1,
                }
            }
            _ => i += 1,
        }
    }
    emit(Piece::Literal(&text[lit_start..]))
}

/// Placeholder keys in order of first appearance, without duplicates.
pub fn placeholders(text: &str) -> Vec<String> {
    let mut keys: Vec<String> = Vec::new();
    let _ = scan(text, |p| {
        if let Piece::Placeholder(k) = p {
            if !keys.iter().any(|x| x == k) {
                keys.push(k.to_string());
            }
        }
        Ok(())
    });
    keys
}

pub fn substitute_globals(text: &str, globals: &[GlobalVar]) -> Result<String, UnboundPlaceholder> {
    let mut out = String::with_capacity(text.len());
    scan(text, |p| {
        match p {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(k) => {
                let var = globals
                    .iter()
                    .find(|g| g.key == k)
                    .ok_or_else(|| UnboundPlaceholder(k.to_string()))?;
                out.push_str(&var.value);
            }
        }
        Ok(())
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn substitutes_and_escapes() {
        let g = [GlobalVar::new("user_name", "John Doe")];
        assert_eq!(substitute_globals("Help {user_name}", &g).unwrap(), "Help John Doe");
        assert_eq!(substitute_globals("no placeholders", &[]).unwrap(), "no placeholders");
        assert_eq!(
            substitute_globals("{missing}", &[]).unwrap_err(),
            UnboundPlaceholder("missing".into())
        );
        assert_eq!(substitute_globals("{{user_name}}", &g).unwrap(), "{user_name}");
        assert_eq!(substitute_globals(r#"{"a": 1}"#, &[]).unwrap(), r#"{"a": 1}"#);
    }

    #[test]
    fn placeholder_listing() {
        assert_eq!(placeholders("{a} {b} {a} {{c}} { d }"), vec!["a", "b"]);
    }
}
