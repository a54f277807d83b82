//! Human review of candidate passages: an append-only vote log with
//! periodic snapshots, and the unanimity rule that finalizes the dataset.
//!
//! Store layout inside a directory:
//! - `items.jsonl`: one [`ReviewItem`] per line
//! - `annotators.json`: registered annotator ids
//! - `votes.log`: every accepted vote write, in order (the audit trail)
//! - `snapshot.json`: latest vote per (item, annotator) and the number of
//!   log lines it covers

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CharacterGazetteer, Lang, Passage};
use crate::perturb::find_alias_matches;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("unknown item {0:?}")]
    UnknownItem(String),
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("malformed vote: {0}")]
    Malformed(String),
    #[error("corrupt store file {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteVerdict {
    Accept,
    Reject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    Misaligned,
    MultipleNames,
}

impl FromStr for VoteVerdict {
    type Err = ReviewError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "accept" => Ok(VoteVerdict::Accept),
            "reject" => Ok(VoteVerdict::Reject),
            other => Err(ReviewError::Malformed(format!("verdict {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub item_id: String,
    pub annotator_id: String,
    pub verdict: VoteVerdict,
    #[serde(default)]
    pub flags: BTreeSet<Flag>,
    #[serde(default)]
    pub timestamp_ms: u64,
}

impl Vote {
    fn same_decision(&self, other: &Vote) -> bool {
        self.verdict == other.verdict && self.flags == other.flags
    }

    fn is_clean_accept(&self) -> bool {
        self.verdict == VoteVerdict::Accept && self.flags.is_empty()
    }
}

/// A highlighted character-name occurrence, in character (not byte)
/// offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub item_id: String,
    pub book_id: String,
    pub texts: BTreeMap<Lang, String>,
    pub name: Option<String>,
    #[serde(default)]
    pub name_spans: BTreeMap<Lang, Vec<Span>>,
}

impl ReviewItem {
    /// Side-by-side texts of a passage with every alias of its character
    /// highlighted.
    pub fn from_passage(p: &Passage, g: &CharacterGazetteer) -> Self {
        let mut aliases: Vec<String> = Vec::new();
        if let Some(name) = &p.gold_name {
            aliases.push(name.clone());
            if let Some(c) = g.character(&p.book_id, name) {
                aliases.extend(c.all_aliases().map(str::to_string));
            }
            aliases.extend(p.name_aliases.values().cloned());
        }
        aliases.sort();
        aliases.dedup();
        let name_spans = p
            .texts
            .iter()
            .map(|(lang, text)| {
                let spans = find_alias_matches(text, &aliases)
                    .into_iter()
                    .map(|m| Span { start: text[..m.start].chars().count(), end: text[..m.end].chars().count() })
                    .collect();
                (lang.clone(), spans)
            })
            .collect();
        Self {
            item_id: p.passage_id.clone(),
            book_id: p.book_id.clone(),
            texts: p.texts.clone(),
            name: p.gold_name.clone(),
            name_spans,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmitOutcome {
    Stored,
    Unchanged,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finalization {
    pub kept: Vec<String>,
    pub dropped: Vec<String>,
    pub pending: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub total_items: usize,
    pub required_annotators: usize,
    pub votes_by_annotator: BTreeMap<String, usize>,
    pub kept: usize,
    pub dropped: usize,
    pub pending: usize,
}

#[derive(Serialize, Deserialize, Default)]
struct Snapshot {
    log_lines: usize,
    votes: Vec<Vote>,
}

const ITEMS_FILE: &str = "items.jsonl";
const ANNOTATORS_FILE: &str = "annotators.json";
const LOG_FILE: &str = "votes.log";
const SNAPSHOT_FILE: &str = "snapshot.json";

pub struct ReviewStore {
    dir: PathBuf,
    items: BTreeMap<String, ReviewItem>,
    annotators: BTreeSet<String>,
    /// Latest vote per item, keyed by annotator.
    votes: BTreeMap<String, BTreeMap<String, Vote>>,
    log: File,
    log_lines: usize,
    snapshot_every: usize,
    since_snapshot: usize,
}

fn corrupt(path: &Path, message: impl ToString) -> ReviewError {
    ReviewError::Corrupt { path: path.to_path_buf(), message: message.to_string() }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(tmp, path)
}

impl ReviewStore {
    /// Creates a store directory holding `items` and `annotators`. Existing
    /// votes in the directory are kept.
    pub fn create(dir: &Path, items: &[ReviewItem], annotators: &[String]) -> Result<Self, ReviewError> {
        fs::create_dir_all(dir)?;
        let mut out = BufWriter::new(File::create(dir.join(ITEMS_FILE))?);
        for item in items {
            serde_json::to_writer(&mut out, item).map_err(std::io::Error::other)?;
            out.write_all(b"\n")?;
        }
        out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
        let names = serde_json::to_vec_pretty(annotators).map_err(std::io::Error::other)?;
        write_atomic(&dir.join(ANNOTATORS_FILE), &names)?;
        Self::open(dir)
    }

    /// Loads items, annotators, the latest snapshot and any log lines written
    /// after it.
    pub fn open(dir: &Path) -> Result<Self, ReviewError> {
        let items_path = dir.join(ITEMS_FILE);
        let mut items = BTreeMap::new();
        for (i, line) in BufReader::new(File::open(&items_path)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let item: ReviewItem =
                serde_json::from_str(&line).map_err(|e| corrupt(&items_path, format!("line {}: {e}", i + 1)))?;
            items.insert(item.item_id.clone(), item);
        }
        let ann_path = dir.join(ANNOTATORS_FILE);
        let annotators: BTreeSet<String> =
            serde_json::from_slice(&fs::read(&ann_path)?).map_err(|e| corrupt(&ann_path, e))?;

        let snap_path = dir.join(SNAPSHOT_FILE);
        let snapshot: Snapshot = match fs::read(&snap_path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(|e| corrupt(&snap_path, e))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Snapshot::default(),
            Err(e) => return Err(e.into()),
        };
        let mut votes: BTreeMap<String, BTreeMap<String, Vote>> = BTreeMap::new();
        for v in snapshot.votes {
            votes.entry(v.item_id.clone()).or_default().insert(v.annotator_id.clone(), v);
        }

        let log_path = dir.join(LOG_FILE);
        let mut log_lines = 0;
        if let Ok(f) = File::open(&log_path) {
            for line in BufReader::new(f).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                log_lines += 1;
                if log_lines <= snapshot.log_lines {
                    continue;
                }
                match serde_json::from_str::<Vote>(&line) {
                    Ok(v) => {
                        votes.entry(v.item_id.clone()).or_default().insert(v.annotator_id.clone(), v);
                    }
                    // A torn final write from a crash; it was never acked.
                    Err(e) => log::warn!("skipping unreadable vote log line {log_lines}: {e}"),
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&log_path)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            items,
            annotators,
            votes,
            log,
            log_lines,
            snapshot_every: 100,
            since_snapshot: 0,
        })
    }

    pub fn with_snapshot_every(mut self, n: usize) -> Self {
        self.snapshot_every = n.max(1);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn items(&self) -> impl Iterator<Item = &ReviewItem> {
        self.items.values()
    }

    pub fn annotators(&self) -> impl Iterator<Item = &str> {
        self.annotators.iter().map(String::as_str)
    }

    pub fn has_annotator(&self, id: &str) -> bool {
        self.annotators.contains(id)
    }

    /// Items the annotator has not voted on, lowest id first.
    pub fn next_items(&self, annotator_id: &str, batch: usize) -> Result<Vec<&ReviewItem>, ReviewError> {
        if !self.has_annotator(annotator_id) {
            return Err(ReviewError::UnknownAnnotator(annotator_id.to_string()));
        }
        Ok(self
            .items
            .values()
            .filter(|item| !self.votes.get(&item.item_id).is_some_and(|v| v.contains_key(annotator_id)))
            .take(batch)
            .collect())
    }

    /// Persists the vote (fsynced) before returning. Resubmitting the same
    /// decision is a no-op; a changed decision replaces the current one and
    /// the old one stays in the log.
    pub fn submit_vote(&mut self, vote: Vote) -> Result<SubmitOutcome, ReviewError> {
        if !self.items.contains_key(&vote.item_id) {
            return Err(ReviewError::UnknownItem(vote.item_id));
        }
        if !self.has_annotator(&vote.annotator_id) {
            return Err(ReviewError::UnknownAnnotator(vote.annotator_id));
        }
        if let Some(prev) = self.votes.get(&vote.item_id).and_then(|v| v.get(&vote.annotator_id)) {
            if prev.same_decision(&vote) {
                return Ok(SubmitOutcome::Unchanged);
            }
        }
        let mut line = serde_json::to_vec(&vote).map_err(std::io::Error::other)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.log_lines += 1;
        self.votes.entry(vote.item_id.clone()).or_default().insert(vote.annotator_id.clone(), vote);
        self.since_snapshot += 1;
        if self.since_snapshot >= self.snapshot_every {
            self.snapshot()?;
        }
        Ok(SubmitOutcome::Stored)
    }

    /// Writes the current votes so the next open can skip replaying the log.
    pub fn snapshot(&mut self) -> Result<(), ReviewError> {
        let snap = Snapshot {
            log_lines: self.log_lines,
            votes: self.votes.values().flat_map(|m| m.values().cloned()).collect(),
        };
        let bytes = serde_json::to_vec(&snap).map_err(std::io::Error::other)?;
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &bytes)?;
        self.since_snapshot = 0;
        Ok(())
    }

    /// Every vote ever written for (item, annotator), oldest first.
    pub fn history(&self, item_id: &str, annotator_id: &str) -> Result<Vec<Vote>, ReviewError> {
        let path = self.dir.join(LOG_FILE);
        let mut out = Vec::new();
        for line in BufReader::new(File::open(&path)?).lines() {
            if let Ok(v) = serde_json::from_str::<Vote>(&line?) {
                if v.item_id == item_id && v.annotator_id == annotator_id {
                    out.push(v);
                }
            }
        }
        Ok(out)
    }

    pub fn votes_for(&self, item_id: &str) -> Vec<&Vote> {
        self.votes.get(item_id).map(|m| m.values().collect()).unwrap_or_default()
    }

    /// Kept when at least `required` annotators voted and every vote is an
    /// unflagged accept; dropped on any reject or flag; pending otherwise.
    pub fn finalize_unanimous(&self, required: usize) -> Finalization {
        let mut fin = Finalization::default();
        for id in self.items.keys() {
            let votes = self.votes_for(id);
            if votes.iter().any(|v| !v.is_clean_accept()) {
                fin.dropped.push(id.clone());
            } else if votes.len() >= required {
                fin.kept.push(id.clone());
            } else {
                fin.pending.push(id.clone());
            }
        }
        fin
    }

    pub fn progress(&self, required: usize) -> Progress {
        let mut votes_by_annotator: BTreeMap<String, usize> = self.annotators.iter().map(|a| (a.clone(), 0)).collect();
        for v in self.votes.values().flat_map(|m| m.values()) {
            *votes_by_annotator.entry(v.annotator_id.clone()).or_default() += 1;
        }
        let fin = self.finalize_unanimous(required);
        Progress {
            total_items: self.items.len(),
            required_annotators: required,
            votes_by_annotator,
            kept: fin.kept.len(),
            dropped: fin.dropped.len(),
            pending: fin.pending.len(),
        }
    }
}
