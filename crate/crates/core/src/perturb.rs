//! Passage perturbations: name masking, seeded word shuffling and the
//! placeholder swap that carries `[MASK]` through machine translation.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MASK_TOKEN: &str = "[MASK]";
pub const PLACEHOLDER: &str = "@@PLACEHOLDER@@";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PerturbError {
    #[error("no alias of the character occurs as a whole token in the text")]
    NoName,
}

/// Variants of a passage presented to a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Standard,
    Masked,
    Shuffled,
    MaskedShuffled,
    NoCharacter,
}

impl Perturbation {
    pub const ALL: [Perturbation; 5] = [
        Perturbation::Standard,
        Perturbation::Masked,
        Perturbation::Shuffled,
        Perturbation::MaskedShuffled,
        Perturbation::NoCharacter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::Standard => "standard",
            Perturbation::Masked => "masked",
            Perturbation::Shuffled => "shuffled",
            Perturbation::MaskedShuffled => "masked_shuffled",
            Perturbation::NoCharacter => "no_character",
        }
    }

    pub fn is_masked(self) -> bool {
        matches!(self, Perturbation::Masked | Perturbation::MaskedShuffled)
    }

    pub fn is_shuffled(self) -> bool {
        matches!(self, Perturbation::Shuffled | Perturbation::MaskedShuffled)
    }
}

impl std::fmt::Display for Perturbation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Perturbation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Perturbation::ALL.into_iter().find(|p| p.as_str() == s).ok_or_else(|| format!("unknown perturbation `{s}`"))
    }
}

/// A whole-token alias occurrence, as byte offsets into the searched text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AliasMatch {
    pub start: usize,
    pub end: usize,
    /// Index into the alias slice that produced the match.
    pub alias: usize,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Matches `alias` at byte offset `start`: first character exact, the rest
/// compared case-insensitively. Returns the end offset on success.
fn match_at(text: &str, start: usize, alias: &str) -> Option<usize> {
    let mut text_chars = text[start..].char_indices();
    let mut alias_chars = alias.chars();
    let first = alias_chars.next()?;
    let (_, t0) = text_chars.next()?;
    if t0 != first {
        return None;
    }
    let mut end = start + t0.len_utf8();
    for a in alias_chars {
        let (off, t) = text_chars.next()?;
        if t != a && !t.to_lowercase().eq(a.to_lowercase()) {
            return None;
        }
        end = start + off + t.len_utf8();
    }
    Some(end)
}

/// Finds every whole-token occurrence of any alias. Overlapping candidates
/// are resolved longest-first (earlier start on equal length); the result is
/// sorted by position and never overlaps.
pub fn find_alias_matches<S: AsRef<str>>(text: &str, aliases: &[S]) -> Vec<AliasMatch> {
    let mut candidates = Vec::new();
    for (idx, alias) in aliases.iter().enumerate() {
        let alias = alias.as_ref();
        let Some(first) = alias.chars().next() else {
            continue;
        };
        for (start, _) in text.match_indices(first) {
            let Some(end) = match_at(text, start, alias) else {
                continue;
            };
            let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
            let after_ok = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
            if before_ok && after_ok {
                candidates.push(AliasMatch { start, end, alias: idx });
            }
        }
    }
    candidates.sort_by(|a, b| (b.end - b.start).cmp(&(a.end - a.start)).then(a.start.cmp(&b.start)));
    let mut chosen: Vec<AliasMatch> = Vec::new();
    for cand in candidates {
        if chosen.iter().all(|c| cand.end <= c.start || cand.start >= c.end) {
            chosen.push(cand);
        }
    }
    chosen.sort_by_key(|m| m.start);
    chosen
}

/// Replaces every whole-token alias occurrence with `[MASK]`.
pub fn mask_character<S: AsRef<str>>(text: &str, aliases: &[S]) -> Result<String, PerturbError> {
    let matches = find_alias_matches(text, aliases);
    if matches.is_empty() {
        return Err(PerturbError::NoName);
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in &matches {
        out.push_str(&text[last..m.start]);
        out.push_str(MASK_TOKEN);
        last = m.end;
    }
    out.push_str(&text[last..]);
    Ok(out)
}

/// Permutes whitespace tokens with a seeded Fisher-Yates shuffle and joins
/// them with single spaces. Punctuation stays glued to its token.
pub fn shuffle_words(text: &str, seed: u64) -> String {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    tokens.shuffle(&mut rng);
    tokens.join(" ")
}

/// Stable seed for a per-record perturbation.
pub fn derive_seed(passage_id: &str, lang: &str, perturbation: &str) -> u64 {
    let mut hasher = Sha256::new();
    for part in [passage_id, lang, perturbation] {
        hasher.update(part.as_bytes());
        hasher.update([0x1f]);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn protect_placeholders(text: &str) -> String {
    text.replace(MASK_TOKEN, PLACEHOLDER)
}

pub fn restore_placeholders(text: &str) -> String {
    if text.contains(MASK_TOKEN) {
        log::warn!("restoring placeholders in text that already contains {MASK_TOKEN}; round trip is ambiguous");
    }
    text.replace(PLACEHOLDER, MASK_TOKEN)
}
