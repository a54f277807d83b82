//! Training-data membership labels from an external n-gram index.
//!
//! A passage is `seen` when some window of `window_words` consecutive words
//! occurs in the index, and `unclear` otherwise.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::Passage;
use crate::retry::{bounded_map, RetryPolicy, Transient};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum IndexError {
    #[error("index temporarily unavailable: {0}")]
    Transient(String),
    #[error("index query failed: {0}")]
    Permanent(String),
}

impl Transient for IndexError {
    fn is_transient(&self) -> bool {
        matches!(self, IndexError::Transient(_))
    }
}

#[derive(Debug, Error)]
pub enum MembershipError {
    #[error("window_words must be at least 1")]
    BadWindow,
    #[error("membership unavailable: {0}")]
    Unavailable(IndexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    Seen,
    Unclear,
}

/// An n-gram index answering "how many times does this text occur?".
pub trait NgramIndex: Send + Sync {
    fn index_id(&self) -> &str;
    fn count(&self, query: &str) -> Result<u64, IndexError>;
}

#[derive(Serialize)]
struct CountRequest<'a> {
    index: &'a str,
    query_type: &'static str,
    query: &'a str,
}

#[derive(Deserialize)]
struct CountResponse {
    count: u64,
}

/// `POST <url>` with `{"index", "query_type": "count", "query"}`, answered by
/// `{"count": n}`.
pub struct HttpNgramIndex {
    index: String,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpNgramIndex {
    pub fn new(url: impl Into<String>, index: impl Into<String>) -> Self {
        let client =
            reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build().expect("http client");
        Self { index: index.into(), url: url.into(), client }
    }
}

impl NgramIndex for HttpNgramIndex {
    fn index_id(&self) -> &str {
        &self.index
    }

    fn count(&self, query: &str) -> Result<u64, IndexError> {
        let body = CountRequest { index: &self.index, query_type: "count", query };
        let resp = self.client.post(&self.url).json(&body).send().map_err(|e| IndexError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| IndexError::Transient(e.to_string()))?;
        if status == 408 || status == 429 || status >= 500 {
            return Err(IndexError::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(IndexError::Permanent(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str::<CountResponse>(&text)
            .map(|r| r.count)
            .map_err(|e| IndexError::Permanent(format!("bad count body: {e}")))
    }
}

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    count: u64,
}

/// Wraps an index with an append-only on-disk cache keyed by
/// `sha256(index id, query)`.
pub struct CachedIndex<I> {
    inner: I,
    path: PathBuf,
    memory: Mutex<HashMap<String, u64>>,
    file: Mutex<File>,
}

impl<I: NgramIndex> CachedIndex<I> {
    pub fn open(inner: I, path: &Path) -> std::io::Result<Self> {
        let mut memory = HashMap::new();
        if let Ok(f) = File::open(path) {
            for line in BufReader::new(f).lines() {
                if let Ok(entry) = serde_json::from_str::<CacheLine>(&line?) {
                    memory.insert(entry.key, entry.count);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self { inner, path: path.to_path_buf(), memory: Mutex::new(memory), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn key(&self, query: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.inner.index_id().as_bytes());
        h.update([0x1f]);
        h.update(query.as_bytes());
        hex::encode(h.finalize())
    }
}

impl<I: NgramIndex> NgramIndex for CachedIndex<I> {
    fn index_id(&self) -> &str {
        self.inner.index_id()
    }

    fn count(&self, query: &str) -> Result<u64, IndexError> {
        let key = self.key(query);
        if let Some(&n) = self.memory.lock().unwrap().get(&key) {
            return Ok(n);
        }
        let n = self.inner.count(query)?;
        let line = serde_json::to_string(&CacheLine { key: key.clone(), count: n }).expect("cache line");
        if let Err(e) = writeln!(self.file.lock().unwrap(), "{line}") {
            log::warn!("could not persist index cache entry: {e}");
        }
        self.memory.lock().unwrap().insert(key, n);
        Ok(n)
    }
}

/// Windows queried for `text`, in order. Texts shorter than the window are
/// queried whole.
pub fn query_windows(text: &str, window_words: usize) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= window_words {
        return vec![words.join(" ")];
    }
    words.windows(window_words).map(|w| w.join(" ")).collect()
}

/// Labels one passage text, stopping at the first window found in the index.
pub fn check_seen(
    passage_text: &str,
    lang: &str,
    index: &dyn NgramIndex,
    window_words: usize,
    retry: &RetryPolicy,
) -> Result<Membership, MembershipError> {
    if window_words == 0 {
        return Err(MembershipError::BadWindow);
    }
    for query in query_windows(passage_text, window_words) {
        let (res, _) = retry.run(|_| index.count(&query));
        let count = res.map_err(MembershipError::Unavailable)?;
        if count > 0 {
            log::debug!("{lang} passage seen in {} via window {query:?}", index.index_id());
            return Ok(Membership::Seen);
        }
    }
    Ok(Membership::Unclear)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipRow {
    pub passage_id: String,
    pub lang: String,
    pub index: String,
    pub label: Option<Membership>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Labels many passages in parallel, at most `max_in_flight` at a time.
pub fn check_passages(
    passages: &[Passage],
    lang: &str,
    index: &dyn NgramIndex,
    window_words: usize,
    retry: &RetryPolicy,
    max_in_flight: usize,
) -> Vec<MembershipRow> {
    bounded_map(passages, max_in_flight, |_, p| {
        let text = p.texts.get(lang).map(String::as_str).unwrap_or("");
        let res = check_seen(text, lang, index, window_words, retry);
        MembershipRow {
            passage_id: p.passage_id.clone(),
            lang: lang.to_string(),
            index: index.index_id().to_string(),
            label: res.as_ref().ok().copied(),
            error: res.err().map(|e| e.to_string()),
        }
    })
}
