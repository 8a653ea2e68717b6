//! Page cache with a fixed time-to-live.
//!
//! On disk each entry is `<dir>/<key>.html` plus a `<key>.meta` JSON
//! sidecar holding the resolved title and fetch time. Files are written to a
//! temporary name and renamed into place, so concurrent readers never see a
//! partial file; concurrent inserts for one key are last-writer-wins.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::parse::{parse_wiki_html, WikiPage};

pub const SECONDS_PER_DAY: u64 = 86_400;
/// Default time-to-live: 90 days.
pub const DEFAULT_TTL_SECS: u64 = 90 * SECONDS_PER_DAY;

/// Source of "now", in Unix seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
    }
}

/// Settable clock for tests and reproducible runs.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(now: u64) -> Self {
        ManualClock(AtomicU64::new(now))
    }

    pub fn set(&self, now: u64) {
        self.0.store(now, Ordering::SeqCst);
    }

    pub fn advance(&self, secs: u64) {
        self.0.fetch_add(secs, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheEntry {
    pub key: String,
    pub page: WikiPage,
    pub fetched_at: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    title: String,
    fetched_at: u64,
}

#[derive(Debug)]
enum Store {
    Memory(RwLock<HashMap<String, CacheEntry>>),
    Disk(PathBuf),
}

#[derive(Debug)]
pub struct PageCache {
    store: Store,
    ttl_secs: u64,
}

/// Cache key / file stem for an entity or title: trimmed, lowercased,
/// whitespace runs and underscores folded to `_`, and any character that is
/// not alphanumeric or one of `_-(),` percent-encoded.
pub fn normalize_title(title: &str) -> String {
    let folded = title.split(|c: char| c.is_whitespace() || c == '_').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("_");
    let mut out = String::with_capacity(folded.len());
    for c in folded.to_lowercase().chars() {
        if c.is_alphanumeric() || "_-(),".contains(c) {
            out.push(c);
        } else {
            let mut buf = [0u8; 4];
            for b in c.encode_utf8(&mut buf).bytes() {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    out
}

impl PageCache {
    pub fn in_memory(ttl_secs: u64) -> Self {
        PageCache { store: Store::Memory(RwLock::new(HashMap::new())), ttl_secs }
    }

    pub fn on_disk(dir: impl Into<PathBuf>, ttl_secs: u64) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(PageCache { store: Store::Disk(dir), ttl_secs })
    }

    pub fn ttl_secs(&self) -> u64 {
        self.ttl_secs
    }

    fn fresh(&self, fetched_at: u64, now: u64) -> bool {
        now.saturating_sub(fetched_at) <= self.ttl_secs
    }

    /// Returns the entry for `key` if one exists and is at most TTL old.
    /// Unreadable or corrupt files count as a miss.
    pub fn lookup(&self, key: &str, now: u64) -> Option<CacheEntry> {
        match &self.store {
            Store::Memory(map) => {
                let map = map.read().unwrap_or_else(|e| e.into_inner());
                map.get(key).filter(|e| self.fresh(e.fetched_at, now)).cloned()
            }
            Store::Disk(dir) => {
                let (html_path, meta_path) = paths(dir, key);
                let meta_raw = std::fs::read_to_string(&meta_path).ok()?;
                let meta: Meta = match serde_json::from_str(&meta_raw) {
                    Ok(m) => m,
                    Err(e) => {
                        log::warn!("corrupt cache metadata {}: {e}", meta_path.display());
                        return None;
                    }
                };
                if !self.fresh(meta.fetched_at, now) {
                    return None;
                }
                let html = match std::fs::read_to_string(&html_path) {
                    Ok(h) => h,
                    Err(e) => {
                        log::warn!("cache entry {} unreadable: {e}", html_path.display());
                        return None;
                    }
                };
                match parse_wiki_html(&html) {
                    Ok(mut page) => {
                        page.title = meta.title;
                        page.fetched_at = meta.fetched_at;
                        Some(CacheEntry { key: key.to_string(), page, fetched_at: meta.fetched_at })
                    }
                    Err(e) => {
                        log::warn!("corrupt cache entry {}: {e}", html_path.display());
                        None
                    }
                }
            }
        }
    }

    /// Stores a fetched page under `key`.
    pub fn insert(&self, key: &str, html: &str, page: &WikiPage) -> std::io::Result<()> {
        match &self.store {
            Store::Memory(map) => {
                let mut map = map.write().unwrap_or_else(|e| e.into_inner());
                map.insert(
                    key.to_string(),
                    CacheEntry { key: key.to_string(), page: page.clone(), fetched_at: page.fetched_at },
                );
                Ok(())
            }
            Store::Disk(dir) => {
                let (html_path, meta_path) = paths(dir, key);
                let meta = Meta { title: page.title.clone(), fetched_at: page.fetched_at };
                write_atomic(&html_path, html.as_bytes())?;
                write_atomic(&meta_path, serde_json::to_string(&meta)?.as_bytes())
            }
        }
    }
}

fn paths(dir: &Path, key: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{key}.html")), dir.join(format!("{key}.meta")))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    static SEQ: AtomicU64 = AtomicU64::new(0);
    let tmp = path.with_extension(format!(
        "tmp{}-{}",
        std::process::id(),
        SEQ.fetch_add(1, Ordering::Relaxed)
    ));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
