//! Paged views over long text (terminal output, markdown files) with navigation and search.
//!
//! Pages are measured in characters. Every rendered view ends with the footer
//! `=== page i of N ===`; clamped moves add a notice line above it.

use std::sync::Mutex;

use thiserror::Error;

use crate::engine::{ParamSchema, ToolSchema};
use crate::kernel::ToolRunner;
use crate::message::{ToolCall, ToolResult};

pub const DEFAULT_PAGE_SIZE: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ViewportError {
    #[error("E_NO_PRIOR_SEARCH: find_next needs an earlier find")]
    NoPriorSearch,
    #[error("E_ARGS: page_size must be at least 1")]
    PageSize,
}

impl ViewportError {
    pub fn code(&self) -> &'static str {
        match self {
            ViewportError::NoPriorSearch => "E_NO_PRIOR_SEARCH",
            ViewportError::PageSize => "E_ARGS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nav {
    Up,
    Down,
    /// 1-based page index.
    To(i64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LastSearch {
    pub needle: String,
    /// Character offset of the match.
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchOutcome {
    Found(String),
    NotFound(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Viewport {
    chars: Vec<char>,
    page_size: usize,
    current_page: usize,
    last_search: Option<LastSearch>,
}

impl Viewport {
    /// Opens `content` at page 1 and returns the first view.
    pub fn open(content: &str, page_size: usize) -> Result<(Self, String), ViewportError> {
        if page_size == 0 {
            return Err(ViewportError::PageSize);
        }
        let vp = Self {
            chars: content.chars().collect(),
            page_size,
            current_page: 1,
            last_search: None,
        };
        let view = vp.view(None);
        Ok((vp, view))
    }

    pub fn page_count(&self) -> usize {
        self.chars.len().div_ceil(self.page_size).max(1)
    }

    pub fn current_page(&self) -> usize {
        self.current_page
    }

    pub fn page_size(&self) -> usize {
        self.page_size
    }

    pub fn last_search(&self) -> Option<&LastSearch> {
        self.last_search.as_ref()
    }

    fn page_bounds(&self, page: usize) -> (usize, usize) {
        let start = (page - 1) * self.page_size;
        (start.min(self.chars.len()), (start + self.page_size).min(self.chars.len()))
    }

    /// Text of a 1-based page; empty outside the valid range.
    pub fn page_text(&self, page: usize) -> String {
        if page == 0 || page > self.page_count() {
            return String::new();
        }
        let (a, b) = self.page_bounds(page);
        self.chars[a..b].iter().collect()
    }

    fn view(&self, notice: Option<&str>) -> String {
        let mut out = self.page_text(self.current_page);
        if !out.is_empty() && !out.ends_with('\n') {
            out.push('\n');
        }
        if let Some(n) = notice {
            out.push_str(n);
            out.push('\n');
        }
        out.push_str(&format!("=== page {} of {} ===", self.current_page, self.page_count()));
        out
    }

    /// The current view without moving.
    pub fn current_view(&self) -> String {
        self.view(None)
    }

    pub fn navigate(&mut self, nav: Nav) -> String {
        let n = self.page_count() as i64;
        let cur = self.current_page as i64;
        let (wanted, notice) = match nav {
            Nav::Up if cur == 1 => (1, Some("(at first page)")),
            Nav::Up => (cur - 1, None),
            Nav::Down if cur == n => (n, Some("(at last page)")),
            Nav::Down => (cur + 1, None),
            Nav::To(i) if i < 1 => (1, Some("(page out of range; showing first page)")),
            Nav::To(i) if i > n => (n, Some("(page out of range; showing last page)")),
            Nav::To(i) => (i, None),
        };
        self.current_page = wanted as usize;
        self.view(notice)
    }

    /// Case-insensitive search from `from` (a char offset). Returns the match offset.
    fn scan(&self, needle: &str, from: usize) -> Option<usize> {
        let pat: Vec<char> = needle.chars().flat_map(char::to_lowercase).collect();
        if pat.is_empty() {
            return None;
        }
        // Lowercasing can change length for a few characters, so compare per position.
        let lower: Vec<Vec<char>> = self.chars.iter().map(|c| c.to_lowercase().collect()).collect();
        (from..self.chars.len()).find(|&start| {
            let mut k = 0;
            let mut i = start;
            while k < pat.len() {
                let Some(lc) = lower.get(i) else { return false };
                for ch in lc {
                    if k >= pat.len() || *ch != pat[k] {
                        return false;
                    }
                    k += 1;
                }
                i += 1;
            }
            true
        })
    }

    fn jump_to(&mut self, needle: &str, position: usize) -> String {
        self.current_page = position / self.page_size + 1;
        self.last_search = Some(LastSearch {
            needle: needle.to_string(),
            position,
        });
        self.view(None)
    }

    /// Finds the first occurrence at or after the start of the current page.
    pub fn find(&mut self, needle: &str) -> SearchOutcome {
        let from = self.page_bounds(self.current_page).0;
        match self.scan(needle, from) {
            Some(pos) => SearchOutcome::Found(self.jump_to(needle, pos)),
            None => SearchOutcome::NotFound(format!("{needle:?} not found after page {}", self.current_page)),
        }
    }

    /// Finds the next occurrence after the previous match. Never wraps around.
    pub fn find_next(&mut self) -> Result<SearchOutcome, ViewportError> {
        let last = self.last_search.clone().ok_or(ViewportError::NoPriorSearch)?;
        Ok(match self.scan(&last.needle, last.position + 1) {
            Some(pos) => SearchOutcome::Found(self.jump_to(&last.needle, pos)),
            None => SearchOutcome::NotFound(format!("no further occurrence of {:?}", last.needle)),
        })
    }
}

/// Paging and search over one viewport, as agent tools. `prefix` namespaces the tool
/// names, e.g. `terminal` gives `terminal_page_up`, `terminal_page_to`, ...
pub struct ViewportTools {
    prefix: String,
    page_size: usize,
    state: Mutex<Option<Viewport>>,
}

impl ViewportTools {
    pub fn new(prefix: &str, page_size: usize) -> Self {
        Self {
            prefix: prefix.to_string(),
            page_size: page_size.max(1),
            state: Mutex::new(None),
        }
    }

    /// Replaces the viewed content (for example with fresh command output) and returns page 1.
    pub fn load(&self, content: &str) -> String {
        let (vp, view) = Viewport::open(content, self.page_size).expect("page size is positive");
        *self.state.lock().expect("viewport lock") = Some(vp);
        view
    }

    fn op<'n>(&self, name: &'n str) -> Option<&'n str> {
        name.strip_prefix(self.prefix.as_str())?.strip_prefix('_')
    }
}

impl ToolRunner for ViewportTools {
    fn schema(&self, name: &str) -> Option<ToolSchema> {
        let s = ToolSchema::new(name, "");
        Some(match self.op(name)? {
            "page_up" => ToolSchema { description: "Scroll up one page.".into(), ..s },
            "page_down" => ToolSchema { description: "Scroll down one page.".into(), ..s },
            "page_to" => ToolSchema { description: "Jump to a page; the first page is 1.".into(), ..s }
                .param(ParamSchema::required("page", "Page number.")),
            "find" => ToolSchema { description: "Jump to the first occurrence of a string, searching from the current page.".into(), ..s }
                .param(ParamSchema::required("needle", "Text to find, case-insensitive.")),
            "find_next" => ToolSchema { description: "Jump to the next occurrence of the last search.".into(), ..s },
            _ => return None,
        })
    }

    fn invoke(&self, call: &ToolCall) -> ToolResult {
        let mut guard = self.state.lock().expect("viewport lock");
        let Some(vp) = guard.as_mut() else {
            return ToolResult::error("E_NO_CONTENT", "nothing is open in this viewport");
        };
        match self.op(&call.tool_name) {
            Some("page_up") => ToolResult::ok(vp.navigate(Nav::Up)),
            Some("page_down") => ToolResult::ok(vp.navigate(Nav::Down)),
            Some("page_to") => match call.get("page").unwrap_or_default().trim().parse::<i64>() {
                Ok(i) => ToolResult::ok(vp.navigate(Nav::To(i))),
                Err(_) => ToolResult::error("E_ARGS", "page must be an integer"),
            },
            Some("find") => match vp.find(call.get("needle").unwrap_or_default()) {
                SearchOutcome::Found(v) => ToolResult::ok(v),
                SearchOutcome::NotFound(m) => ToolResult::error("E_NOT_FOUND", m),
            },
            Some("find_next") => match vp.find_next() {
                Ok(SearchOutcome::Found(v)) => ToolResult::ok(v),
                Ok(SearchOutcome::NotFound(m)) => ToolResult::error("E_NOT_FOUND", m),
                Err(e) => ToolResult::error(e.code(), e.to_string()),
            },
            _ => ToolResult::error("E_UNKNOWN_TOOL", format!("no tool named {:?}", call.tool_name)),
        }
    }
}
