//! Book ingestion, gazetteer-based character tagging and passage records.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perturb::{find_alias_matches, mask_character};
use crate::sampler::TokenizerHandle;

/// ISO-639 style language code such as `en`, `es` or `mai`.
pub type Lang = String;

pub const ENGLISH: &str = "en";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("book text is not valid UTF-8: {0}")]
    Ingest(#[from] std::str::Utf8Error),
    #[error("document contains no paragraphs")]
    EmptyDocument,
    #[error("group {group} is missing language `{lang}`")]
    MissingLanguage { group: usize, lang: Lang },
    #[error("group {group} has unexpected language `{lang}`")]
    ExtraLanguage { group: usize, lang: Lang },
    #[error("no gazetteer entry for book `{0}`")]
    UnknownBook(String),
    #[error("invalid corpus config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BookMeta {
    pub book_id: String,
    pub author: String,
    /// Accepted titles per language; the first entry is canonical.
    pub titles: BTreeMap<Lang, Vec<String>>,
    #[serde(default)]
    pub pub_years: BTreeMap<Lang, i32>,
    #[serde(default)]
    pub copyrighted: bool,
}

impl BookMeta {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if !self.titles.contains_key(ENGLISH) {
            return Err(CorpusError::Config(format!("book `{}` has no English title", self.book_id)));
        }
        if let Some((lang, _)) = self.titles.iter().find(|(_, v)| v.is_empty()) {
            return Err(CorpusError::Config(format!("book `{}` has an empty title list for `{lang}`", self.book_id)));
        }
        Ok(())
    }

    pub fn canonical_title(&self) -> &str {
        &self.titles[ENGLISH][0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Character {
    pub name: String,
    /// Aliases per language. The English list is the fallback for languages
    /// without their own entry.
    pub aliases: BTreeMap<Lang, Vec<String>>,
}

impl Character {
    pub fn aliases_for(&self, lang: &str) -> &[String] {
        self.aliases
            .get(lang)
            .or_else(|| self.aliases.get(ENGLISH))
            .map(Vec::as_slice)
            .unwrap_or(std::slice::from_ref(&self.name))
    }

    /// Every alias in every language, for roster lookups.
    pub fn all_aliases(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.values().flatten().map(String::as_str))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacterGazetteer {
    pub books: BTreeMap<String, Vec<Character>>,
}

impl CharacterGazetteer {
    pub fn characters(&self, book_id: &str) -> Result<&[Character], CorpusError> {
        self.books.get(book_id).map(Vec::as_slice).ok_or_else(|| CorpusError::UnknownBook(book_id.to_string()))
    }

    pub fn character(&self, book_id: &str, name: &str) -> Option<&Character> {
        self.books.get(book_id)?.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for (book, chars) in &self.books {
            let mut seen = HashSet::new();
            for c in chars {
                if !seen.insert(c.name.as_str()) {
                    return Err(CorpusError::Config(format!("duplicate character `{}` in `{book}`", c.name)));
                }
                if c.aliases.values().any(Vec::is_empty) {
                    return Err(CorpusError::Config(format!("empty alias list for `{}` in `{book}`", c.name)));
                }
            }
        }
        Ok(())
    }
}

/// One book in the corpus config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BookEntry {
    #[serde(flatten)]
    pub meta: BookMeta,
    #[serde(default)]
    pub characters: Vec<Character>,
}

/// The TOML corpus config: book metadata plus the per-book gazetteer.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CorpusConfig {
    #[serde(default)]
    pub books: Vec<BookEntry>,
}

impl CorpusConfig {
    pub fn from_toml(text: &str) -> Result<Self, CorpusError> {
        let cfg: CorpusConfig = toml::from_str(text).map_err(|e| CorpusError::Config(e.to_string()))?;
        let mut ids = HashSet::new();
        for book in &cfg.books {
            book.meta.validate()?;
            if !ids.insert(book.meta.book_id.as_str()) {
                return Err(CorpusError::Config(format!("duplicate book_id `{}`", book.meta.book_id)));
            }
        }
        cfg.gazetteer().validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn gazetteer(&self) -> CharacterGazetteer {
        CharacterGazetteer {
            books: self.books.iter().map(|b| (b.meta.book_id.clone(), b.characters.clone())).collect(),
        }
    }

    pub fn metas(&self) -> BTreeMap<String, BookMeta> {
        self.books.iter().map(|b| (b.meta.book_id.clone(), b.meta.clone())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub book_id: String,
    pub lang: Lang,
    pub seq: usize,
    pub text: String,
    pub sentence_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitter {
    /// Paragraphs are separated by one or more blank lines.
    #[default]
    BlankLine,
    /// Every non-empty line is a paragraph.
    Line,
}

fn sentence_count(text: &str) -> usize {
    let mut count = 0;
    let mut chars = text.chars().peekable();
    let mut in_sentence = false;
    while let Some(c) = chars.next() {
        if !c.is_whitespace() {
            in_sentence = true;
        }
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) && in_sentence {
            count += 1;
            in_sentence = false;
        }
    }
    count + usize::from(in_sentence)
}

/// Splits a plain-text book into trimmed, non-empty paragraphs in document
/// order.
pub fn ingest_book(raw: &[u8], meta: &BookMeta, lang: &str, splitter: Splitter) -> Result<Vec<Paragraph>, CorpusError> {
    let text = std::str::from_utf8(raw)?.replace("\r\n", "\n");
    let blocks: Vec<String> = match splitter {
        Splitter::BlankLine => {
            let mut blocks = Vec::new();
            let mut current: Vec<&str> = Vec::new();
            for line in text.lines() {
                if line.trim().is_empty() {
                    if !current.is_empty() {
                        blocks.push(current.join("\n"));
                        current.clear();
                    }
                } else {
                    current.push(line);
                }
            }
            if !current.is_empty() {
                blocks.push(current.join("\n"));
            }
            blocks
        }
        Splitter::Line => text.lines().map(str::to_string).collect(),
    };
    let paragraphs: Vec<Paragraph> = blocks
        .iter()
        .map(|b| b.trim())
        .filter(|b| !b.is_empty())
        .enumerate()
        .map(|(seq, b)| Paragraph {
            book_id: meta.book_id.clone(),
            lang: lang.to_string(),
            seq,
            text: b.to_string(),
            sentence_ids: (0..sentence_count(b)).map(|k| format!("{}:{}:{}:{}", meta.book_id, lang, seq, k)).collect(),
        })
        .collect();
    if paragraphs.is_empty() {
        return Err(CorpusError::EmptyDocument);
    }
    Ok(paragraphs)
}

/// A tagged character mention, in character (not byte) offsets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NameSpan {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

/// Byte-offset tagging shared by [`tag_character_names`] and passage building.
fn tag_bytes<'g>(text: &str, lang: &str, characters: &'g [Character]) -> Vec<(&'g Character, usize, usize)> {
    let mut aliases: Vec<&str> = Vec::new();
    let mut owner: Vec<&Character> = Vec::new();
    for c in characters {
        for a in c.aliases_for(lang) {
            aliases.push(a);
            owner.push(c);
        }
    }
    find_alias_matches(text, &aliases).into_iter().map(|m| (owner[m.alias], m.start, m.end)).collect()
}

/// Tags every whole-token alias mention of a gazetteer character.
pub fn tag_character_names(p: &Paragraph, g: &CharacterGazetteer) -> Result<Vec<NameSpan>, CorpusError> {
    let characters = g.characters(&p.book_id)?;
    Ok(tag_bytes(&p.text, &p.lang, characters)
        .into_iter()
        .map(|(c, start, end)| NameSpan {
            name: c.name.clone(),
            start: p.text[..start].chars().count(),
            end: p.text[..end].chars().count(),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub passage_id: String,
    pub book_id: String,
    pub texts: BTreeMap<Lang, String>,
    pub gold_name: Option<String>,
    #[serde(default)]
    pub name_aliases: BTreeMap<Lang, String>,
    pub has_character: bool,
    #[serde(default)]
    pub masked_texts: BTreeMap<Lang, String>,
    #[serde(default)]
    pub token_counts: BTreeMap<Lang, usize>,
    /// Name of the tokenizer that produced `token_counts`.
    #[serde(default)]
    pub token_counter: String,
}

impl Passage {
    pub fn langs(&self) -> impl Iterator<Item = &str> {
        self.texts.keys().map(String::as_str)
    }

    /// Checks the cross-field invariants of a passage record.
    pub fn check(&self) -> Result<(), String> {
        if self.has_character != self.gold_name.is_some() {
            return Err(format!("{}: has_character disagrees with gold_name", self.passage_id));
        }
        if self.has_character {
            let masked: BTreeSet<&String> = self.masked_texts.keys().collect();
            let texts: BTreeSet<&String> = self.texts.keys().collect();
            if masked != texts {
                return Err(format!("{}: masked_texts languages differ from texts", self.passage_id));
            }
            if let Some((lang, _)) = self.masked_texts.iter().find(|(_, t)| !t.contains(crate::MASK_TOKEN)) {
                return Err(format!("{}: masked text for `{lang}` has no [MASK]", self.passage_id));
            }
        } else if !self.masked_texts.is_empty() {
            return Err(format!("{}: masked_texts on a passage without a character", self.passage_id));
        }
        Ok(())
    }
}

/// A set of paragraphs that say the same thing in several languages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedGroup {
    pub book_id: String,
    pub texts: BTreeMap<Lang, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason")]
pub enum DiscardReason {
    MultipleNames { names: Vec<String> },
    NameMissingIn { lang: Lang },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discarded {
    pub group: usize,
    #[serde(flatten)]
    pub reason: DiscardReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PassageSets {
    pub one_name: Vec<Passage>,
    pub no_name: Vec<Passage>,
    pub discarded: Vec<Discarded>,
}

/// Partitions aligned groups by the distinct characters named in their
/// English text: exactly one goes to `one_name` (masked in every language),
/// none goes to `no_name`, more than one is discarded.
pub fn build_passages(groups: &[AlignedGroup], g: &CharacterGazetteer) -> Result<PassageSets, CorpusError> {
    let mut sets = PassageSets::default();
    let Some(first) = groups.first() else {
        return Ok(sets);
    };
    let expected: BTreeSet<&String> = first.texts.keys().collect();
    if !first.texts.contains_key(ENGLISH) {
        return Err(CorpusError::MissingLanguage { group: 0, lang: ENGLISH.into() });
    }
    let tokenizer = TokenizerHandle::whitespace();

    for (idx, group) in groups.iter().enumerate() {
        let keys: BTreeSet<&String> = group.texts.keys().collect();
        if let Some(missing) = expected.difference(&keys).next() {
            return Err(CorpusError::MissingLanguage { group: idx, lang: (*missing).clone() });
        }
        if let Some(extra) = keys.difference(&expected).next() {
            return Err(CorpusError::ExtraLanguage { group: idx, lang: (*extra).clone() });
        }
        let characters = g.characters(&group.book_id)?;
        let names: BTreeSet<&str> = tag_bytes(&group.texts[ENGLISH], ENGLISH, characters)
            .into_iter()
            .map(|(c, _, _)| c.name.as_str())
            .collect();

        let mut passage = Passage {
            passage_id: format!("{}-{:04}", group.book_id, idx),
            book_id: group.book_id.clone(),
            texts: group.texts.clone(),
            gold_name: None,
            name_aliases: BTreeMap::new(),
            has_character: false,
            masked_texts: BTreeMap::new(),
            token_counts: group.texts.iter().map(|(l, t)| (l.clone(), tokenizer.count(t))).collect(),
            token_counter: tokenizer.name.clone(),
        };

        match names.len() {
            0 => sets.no_name.push(passage),
            1 => {
                let name = *names.first().unwrap();
                let character = characters.iter().find(|c| c.name == name).unwrap();
                let mut missing = None;
                for (lang, text) in &group.texts {
                    let aliases = character.aliases_for(lang);
                    let matches = find_alias_matches(text, aliases);
                    match (matches.first(), mask_character(text, aliases)) {
                        (Some(m), Ok(masked)) => {
                            passage.name_aliases.insert(lang.clone(), text[m.start..m.end].to_string());
                            passage.masked_texts.insert(lang.clone(), masked);
                        }
                        _ => {
                            missing = Some(lang.clone());
                            break;
                        }
                    }
                }
                if let Some(lang) = missing {
                    sets.discarded.push(Discarded { group: idx, reason: DiscardReason::NameMissingIn { lang } });
                } else {
                    passage.gold_name = Some(name.to_string());
                    passage.has_character = true;
                    sets.one_name.push(passage);
                }
            }
            _ => sets.discarded.push(Discarded {
                group: idx,
                reason: DiscardReason::MultipleNames { names: names.iter().map(|s| s.to_string()).collect() },
            }),
        }
    }
    Ok(sets)
}
