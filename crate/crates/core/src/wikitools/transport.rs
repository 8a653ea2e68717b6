//! Network access for the Wikipedia tools: live MediaWiki API or recorded fixtures.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use super::cache::normalize_title;
use crate::chat::RetryPolicy;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request failed after {attempts} attempt(s): {message}")]
    Failed { attempts: u32, message: String },
    #[error("unexpected response: {0}")]
    BadResponse(String),
}

/// Search and page retrieval. Every method call counts as one network operation.
pub trait WikiTransport: Send + Sync {
    /// Candidate page titles for `query`, best first, at most `limit`.
    fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, TransportError>;

    /// Article HTML for an exact title, or `None` if no such page exists.
    fn page_html(&self, title: &str) -> Result<Option<String>, TransportError>;
}

/// Wraps a transport and counts the operations it performs.
#[derive(Debug)]
pub struct CountingTransport<T> {
    inner: T,
    calls: AtomicUsize,
}

impl<T> CountingTransport<T> {
    pub fn new(inner: T) -> Self {
        CountingTransport { inner, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl<T: WikiTransport> WikiTransport for CountingTransport<T> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.search(query, limit)
    }

    fn page_html(&self, title: &str) -> Result<Option<String>, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.page_html(title)
    }
}

impl<T: WikiTransport + ?Sized> WikiTransport for std::sync::Arc<T> {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, TransportError> {
        (**self).search(query, limit)
    }

    fn page_html(&self, title: &str) -> Result<Option<String>, TransportError> {
        (**self).page_html(title)
    }
}

/// Recorded responses: `<dir>/search/<key>.json` holds a JSON array of ranked
/// titles and `<dir>/pages/<key>.html` the page HTML, where `<key>` is
/// [`normalize_title`] of the query or title. Missing files mean "no results".
#[derive(Debug, Clone)]
pub struct FixtureTransport {
    dir: PathBuf,
}

impl FixtureTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FixtureTransport { dir: dir.into() }
    }
}

impl WikiTransport for FixtureTransport {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, TransportError> {
        let path = self.dir.join("search").join(format!("{}.json", normalize_title(query)));
        let raw = match std::fs::read_to_string(&path) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(TransportError::Failed { attempts: 1, message: e.to_string() }),
        };
        let mut titles: Vec<String> = serde_json::from_str(&raw)
            .map_err(|e| TransportError::BadResponse(format!("{}: {e}", path.display())))?;
        titles.truncate(limit);
        Ok(titles)
    }

    fn page_html(&self, title: &str) -> Result<Option<String>, TransportError> {
        let path = self.dir.join("pages").join(format!("{}.html", normalize_title(title)));
        match std::fs::read_to_string(&path) {
            Ok(html) => Ok(Some(html)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(TransportError::Failed { attempts: 1, message: e.to_string() }),
        }
    }
}

pub const DEFAULT_API_URL: &str = "https://en.wikipedia.org/w/api.php";

/// Live MediaWiki Action API: `list=search` for ranking, `action=parse` for HTML.
#[derive(Debug, Clone)]
pub struct HttpTransport {
    api_url: String,
    retry: RetryPolicy,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(api_url: &str, timeout: Duration) -> Result<Self, TransportError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("geocheck/", env!("CARGO_PKG_VERSION"), " (fact-checking evaluation harness)"))
            .build()
            .map_err(|e| TransportError::Failed { attempts: 0, message: e.to_string() })?;
        Ok(HttpTransport { api_url: api_url.to_string(), retry: RetryPolicy::default(), client })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn get(&self, params: &[(&str, &str)]) -> Result<Value, TransportError> {
        let mut last = String::new();
        let attempts = self.retry.max_attempts.max(1);
        for attempt in 1..=attempts {
            if attempt > 1 {
                std::thread::sleep(self.retry.delay(attempt - 1));
            }
            match self.client.get(&self.api_url).query(params).send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json().map_err(|e| TransportError::BadResponse(e.to_string()));
                }
                Ok(resp) if resp.status().is_client_error() && resp.status().as_u16() != 429 => {
                    return Err(TransportError::BadResponse(format!("HTTP {}", resp.status())));
                }
                Ok(resp) => last = format!("HTTP {}", resp.status()),
                Err(e) => last = e.to_string(),
            }
        }
        Err(TransportError::Failed { attempts, message: last })
    }
}

impl WikiTransport for HttpTransport {
    fn search(&self, query: &str, limit: usize) -> Result<Vec<String>, TransportError> {
        let limit = limit.to_string();
        let v = self.get(&[
            ("action", "query"),
            ("list", "search"),
            ("srsearch", query),
            ("srlimit", &limit),
            ("format", "json"),
            ("formatversion", "2"),
        ])?;
        let hits = v
            .pointer("/query/search")
            .and_then(Value::as_array)
            .ok_or_else(|| TransportError::BadResponse("missing query.search".into()))?;
        Ok(hits.iter().filter_map(|h| h.get("title").and_then(Value::as_str).map(str::to_string)).collect())
    }

    fn page_html(&self, title: &str) -> Result<Option<String>, TransportError> {
        let v = self.get(&[
            ("action", "parse"),
            ("page", title),
            ("prop", "text"),
            ("redirects", "1"),
            ("format", "json"),
            ("formatversion", "2"),
        ])?;
        if v.pointer("/error/code").and_then(Value::as_str) == Some("missingtitle") {
            return Ok(None);
        }
        let html = v
            .pointer("/parse/text")
            .and_then(Value::as_str)
            .ok_or_else(|| TransportError::BadResponse("missing parse.text".into()))?;
        let resolved = v.pointer("/parse/title").and_then(Value::as_str).unwrap_or(title);
        let escaped = resolved.replace('&', "&amp;").replace('<', "&lt;");
        Ok(Some(format!("<html><body><h1 id=\"firstHeading\">{escaped}</h1>{html}</body></html>")))
    }
}
