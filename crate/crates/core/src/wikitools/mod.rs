//! The agent's Wikipedia tools.
//!
//! `fetch_wikipedia_entity` resolves an entity to a page and returns its full
//! text, or a header listing when the page exceeds `page_cap` characters.
//! `fetch_wikipedia_entity_with_header` returns one section. Both go through
//! a TTL page cache; the message templates below are part of the contract
//! with the model and are reproduced byte-for-byte.

mod cache;
mod parse;
mod transport;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use cache::{
    normalize_title, CacheEntry, Clock, ManualClock, PageCache, SystemClock, DEFAULT_TTL_SECS, SECONDS_PER_DAY,
};
pub use parse::{parse_wiki_html, ParseError, WikiPage, LEDE_HEADER};
pub use transport::{
    CountingTransport, FixtureTransport, HttpTransport, TransportError, WikiTransport, DEFAULT_API_URL,
};

use crate::chat::{ToolCall, ToolExecutor, ToolOutput, ToolParam, ToolSpec};

pub const FETCH_ENTITY: &str = "fetch_wikipedia_entity";
pub const FETCH_ENTITY_WITH_HEADER: &str = "fetch_wikipedia_entity_with_header";

/// Default "page too long" threshold, in characters.
pub const DEFAULT_PAGE_CAP: usize = 2000;
/// Number of candidates listed for an ambiguous entity.
pub const MAX_CANDIDATES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolResultKind {
    Content,
    TooLong,
    Disambiguation,
    NotFound,
    HeaderError,
    /// Transport or parse failure, reported to the model as text.
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub kind: ToolResultKind,
    pub text: String,
}

impl ToolResult {
    fn new(kind: ToolResultKind, text: impl Into<String>) -> Self {
        ToolResult { kind, text: text.into() }
    }

    pub fn too_long(headers: &[String]) -> Self {
        Self::new(
            ToolResultKind::TooLong,
            format!(
                "The page is too long. Use the `{FETCH_ENTITY_WITH_HEADER}` tool to get specific information. Headers: {}",
                py_list(headers)
            ),
        )
    }

    pub fn header_error(header: &str, headers: &[String]) -> Self {
        Self::new(
            ToolResultKind::HeaderError,
            format!("Could not find {header} in the Wikipedia page. Valid headers are: {}", py_list(headers)),
        )
    }

    pub fn disambiguation(entity: &str, titles: &[String]) -> Self {
        Self::new(
            ToolResultKind::Disambiguation,
            format!("Multiple pages found for {entity}. Candidates: {}", py_list(titles)),
        )
    }

    pub fn not_found(entity: &str) -> Self {
        Self::new(ToolResultKind::NotFound, format!("No Wikipedia page found for {entity}. Search results: []"))
    }

    pub fn error(message: impl std::fmt::Display) -> Self {
        Self::new(ToolResultKind::Error, format!("Error: {message}"))
    }
}

/// Python `repr` of a string: single-quoted unless it contains a single
/// quote and no double quote.
fn py_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

/// Python `repr` of a list of strings, e.g. `['a', 'b']`.
pub fn py_list(items: &[String]) -> String {
    let inner: Vec<String> = items.iter().map(|s| py_repr(s)).collect();
    format!("[{}]", inner.join(", "))
}

/// Tool schemas advertised to the model.
pub fn wiki_tool_specs() -> Vec<ToolSpec> {
    let entity = ToolParam {
        name: "entity".into(),
        kind: "string".into(),
        description: "The entity to search for.".into(),
        required: true,
    };
    vec![
        ToolSpec {
            name: FETCH_ENTITY.into(),
            description: "Search for a given entity on Wikipedia.\n\
                Examples Usage: \"fetch_wikipedia_entity('Python')\" will return the content of the Python Wikipedia page.\n\
                Use the `fetch_wikipedia_entity_with_header` tool to get specific information."
                .into(),
            parameters: vec![entity.clone()],
        },
        ToolSpec {
            name: FETCH_ENTITY_WITH_HEADER.into(),
            description: "Get the content of a specific header from a Wikipedia page.\n\
                This function should be used after `fetch_wikipedia_entity`. Examples Usage: \
                \"fetch_wikipedia_entity_with_header('Python', 'History')\" will return the History section of the Python Wikipedia page."
                .into(),
            parameters: vec![
                entity,
                ToolParam {
                    name: "header".into(),
                    kind: "string".into(),
                    description: "The header to extract the content from.".into(),
                    required: true,
                },
            ],
        },
    ]
}

enum Resolved {
    Page { page: WikiPage, cache_hit: bool },
    Done(ToolResult),
}

pub struct WikiTools {
    transport: Box<dyn WikiTransport>,
    cache: PageCache,
    clock: Arc<dyn Clock>,
    page_cap: usize,
}

impl WikiTools {
    pub fn new(transport: impl WikiTransport + 'static, cache: PageCache) -> Self {
        WikiTools { transport: Box::new(transport), cache, clock: Arc::new(SystemClock), page_cap: DEFAULT_PAGE_CAP }
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_page_cap(mut self, cap: usize) -> Self {
        self.page_cap = cap;
        self
    }

    pub fn page_cap(&self) -> usize {
        self.page_cap
    }

    fn resolve(&self, entity: &str) -> Resolved {
        let entity = entity.trim();
        if entity.is_empty() {
            return Resolved::Done(ToolResult::error("entity must not be empty"));
        }
        let key = normalize_title(entity);
        if let Some(hit) = self.cache.lookup(&key, self.clock.now()) {
            return Resolved::Page { page: hit.page, cache_hit: true };
        }

        let titles = match self.transport.search(entity, MAX_CANDIDATES) {
            Ok(t) => t,
            Err(e) => return Resolved::Done(ToolResult::error(e)),
        };
        let chosen = match titles.iter().find(|t| normalize_title(t) == key) {
            Some(exact) => exact.clone(),
            None => match titles.as_slice() {
                [] => return Resolved::Done(ToolResult::not_found(entity)),
                [only] => only.clone(),
                many => {
                    let top = &many[..many.len().min(MAX_CANDIDATES)];
                    return Resolved::Done(ToolResult::disambiguation(entity, top));
                }
            },
        };

        let html = match self.transport.page_html(&chosen) {
            Ok(Some(h)) => h,
            Ok(None) => return Resolved::Done(ToolResult::not_found(entity)),
            Err(e) => return Resolved::Done(ToolResult::error(e)),
        };
        let mut page = match parse_wiki_html(&html) {
            Ok(p) => p,
            Err(e) => return Resolved::Done(ToolResult::error(format!("could not parse page {chosen}: {e}"))),
        };
        page.title = chosen.clone();
        page.fetched_at = self.clock.now();
        for k in [key, normalize_title(&chosen)] {
            if let Err(e) = self.cache.insert(&k, &html, &page) {
                log::warn!("cannot cache {chosen}: {e}");
            }
        }
        Resolved::Page { page, cache_hit: false }
    }

    /// Full page text, or the header listing when the page exceeds the cap.
    pub fn fetch_wikipedia_entity(&self, entity: &str) -> ToolResult {
        self.fetch_entity_traced(entity).0
    }

    /// Text under one header; matching ignores case and surrounding whitespace.
    pub fn fetch_wikipedia_entity_with_header(&self, entity: &str, header: &str) -> ToolResult {
        self.fetch_header_traced(entity, header).0
    }

    fn fetch_entity_traced(&self, entity: &str) -> (ToolResult, Option<bool>) {
        match self.resolve(entity) {
            Resolved::Done(r) => (r, None),
            Resolved::Page { page, cache_hit } => {
                let result = if page.full_text.chars().count() <= self.page_cap {
                    ToolResult::new(ToolResultKind::Content, page.full_text)
                } else {
                    ToolResult::too_long(&page.headers)
                };
                (result, Some(cache_hit))
            }
        }
    }

    fn fetch_header_traced(&self, entity: &str, header: &str) -> (ToolResult, Option<bool>) {
        match self.resolve(entity) {
            Resolved::Done(r) => (r, None),
            Resolved::Page { page, cache_hit } => {
                let result = match page.find_header(header) {
                    Some(i) => ToolResult::new(ToolResultKind::Content, page.section_text(i)),
                    None => ToolResult::header_error(header, &page.headers),
                };
                (result, Some(cache_hit))
            }
        }
    }
}

impl ToolExecutor for WikiTools {
    fn specs(&self) -> Vec<ToolSpec> {
        wiki_tool_specs()
    }

    fn execute(&self, call: &ToolCall) -> ToolOutput {
        let arg = |name: &str| call.arguments.get(name).map(String::as_str).unwrap_or_default();
        let (result, cache_hit) = match call.name.as_str() {
            FETCH_ENTITY => self.fetch_entity_traced(arg("entity")),
            FETCH_ENTITY_WITH_HEADER => self.fetch_header_traced(arg("entity"), arg("header")),
            other => (ToolResult::error(format!("unknown tool '{other}'")), None),
        };
        ToolOutput { is_error: result.kind == ToolResultKind::Error, text: result.text, cache_hit }
    }
}
