//! Response parsing, per-task scoring and error classification.
//!
//! Direct probing is fuzzy-matched on normalized author and title. Name
//! cloze uses exact match after normalization as the headline metric, with
//! the fuzzy threshold kept as a separate lenient column. Prefix probing is
//! scored with ChrF++ against the gold continuation.
//!
//! Wrong answers get exactly one [`ErrorClass`]; rules are tried in this
//! order and the first hit wins:
//!
//! 1. `abstention` - empty, a bare marker such as "unknown"/"none", or a
//!    response mentioning "unknown", "book name" or "author name"
//! 2. `mask_echo` - the answer is the `[MASK]` token itself
//! 3. `pronoun`, 4. `honorific` - the prediction is in the per-language list
//! 5. `same_book_entity` - another character of the same book
//! 6. `correct_author_wrong_title` - direct probing only
//! 7. `multi_guess` - two or more distinct candidates
//! 8. `broken_output` - mixed scripts or mostly non-text characters
//! 9. `other_wrong`

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{BookMeta, Character, CharacterGazetteer, Lang, Passage, ENGLISH};
use crate::metrics::{chrf_pp, levenshtein_similarity, normalize_text, MetricConfig};
use crate::perturb::{Perturbation, MASK_TOKEN};
use crate::probe::{passage_variant, split_prefix, PrefixSplit, ProbeResult, ResultStatus, TaskKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NameExtraction {
    /// The last name-like run in the response.
    #[default]
    Last,
    First,
}

fn lists(pairs: &[(&str, &[&str])]) -> BTreeMap<Lang, Vec<String>> {
    pairs.iter().map(|(l, v)| (l.to_string(), v.iter().map(|s| s.to_string()).collect())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoreConfig {
    pub dp_fuzzy_threshold: f64,
    pub nc_fuzzy_threshold: f64,
    /// Honorifics per language; English entries apply to every language.
    pub honorifics: BTreeMap<Lang, Vec<String>>,
    pub pronouns: BTreeMap<Lang, Vec<String>>,
    /// A normalized response equal to one of these is an abstention.
    pub abstention_markers: Vec<String>,
    /// A response containing one of these (case-insensitive) is an abstention.
    pub abstention_phrases: Vec<String>,
    /// Optional culturally popular names, reported as a flag on `other_wrong`.
    pub popular_names: BTreeMap<Lang, Vec<String>>,
    pub name_extraction: NameExtraction,
    /// Minimum share of letters in a second script for output to count as mixed.
    pub mixed_script_share: f64,
    /// Share of non-letter, non-digit, non-space, non-punctuation characters
    /// above which output is broken.
    pub non_text_ratio: f64,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            dp_fuzzy_threshold: 0.9,
            nc_fuzzy_threshold: 0.7,
            honorifics: lists(&[
                (
                    "en",
                    &[
                        "mr",
                        "mrs",
                        "miss",
                        "ms",
                        "mister",
                        "dr",
                        "doctor",
                        "sir",
                        "madam",
                        "madame",
                        "lady",
                        "lord",
                        "master",
                        "captain",
                        "aunt",
                        "uncle",
                        "monsieur",
                        "mademoiselle",
                    ],
                ),
                ("es", &["senor", "senora", "senorita", "don", "dona"]),
                ("tr", &["bay", "bayan", "hanim", "bey", "efendi"]),
                ("vi", &["ong", "ba", "co", "anh", "chi"]),
            ]),
            pronouns: lists(&[
                ("en", &["he", "she", "him", "her", "his", "hers", "they", "them", "i", "me", "you", "we", "it"]),
                ("es", &["el", "ella", "ellos", "ellas", "yo", "tu", "usted"]),
                ("tr", &["o", "onu", "ben", "sen", "biz", "onlar"]),
                ("vi", &["anh ay", "co ay", "no", "toi", "ho"]),
            ]),
            abstention_markers: ["", "unknown", "none", "name", "n/a", "null", "no answer"].map(String::from).to_vec(),
            abstention_phrases: [
                "unknown",
                "book name",
                "author name",
                "i don't know",
                "i do not know",
                "cannot determine",
                "can't determine",
            ]
            .map(String::from)
            .to_vec(),
            popular_names: BTreeMap::new(),
            name_extraction: NameExtraction::Last,
            mixed_script_share: 0.15,
            non_text_ratio: 0.3,
        }
    }
}

impl ScoreConfig {
    pub fn validate(&self) -> Result<(), String> {
        for t in [self.dp_fuzzy_threshold, self.nc_fuzzy_threshold] {
            if !(t > 0.0 && t <= 1.0) {
                return Err(format!("threshold {t} outside (0, 1]"));
            }
        }
        Ok(())
    }

    fn in_list(&self, lists: &BTreeMap<Lang, Vec<String>>, lang: &str, normalized: &str) -> bool {
        [ENGLISH, lang].iter().filter_map(|l| lists.get(*l)).flatten().any(|w| normalize_text(w) == normalized)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Abstention,
    MaskEcho,
    Pronoun,
    Honorific,
    SameBookEntity,
    CorrectAuthorWrongTitle,
    MultiGuess,
    BrokenOutput,
    OtherWrong,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Abstention => "abstention",
            ErrorClass::MaskEcho => "mask_echo",
            ErrorClass::Pronoun => "pronoun",
            ErrorClass::Honorific => "honorific",
            ErrorClass::SameBookEntity => "same_book_entity",
            ErrorClass::CorrectAuthorWrongTitle => "correct_author_wrong_title",
            ErrorClass::MultiGuess => "multi_guess",
            ErrorClass::BrokenOutput => "broken_output",
            ErrorClass::OtherWrong => "other_wrong",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DpAnswer {
    pub title: String,
    pub author: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub passage_id: String,
    pub book_id: String,
    pub lang: Lang,
    pub task: TaskKind,
    pub perturbation: Perturbation,
    pub endpoint: String,
    /// Headline correctness; absent for prefix probing.
    pub correct: Option<bool>,
    /// Name cloze only: fuzzy match at the lenient threshold.
    pub lenient_correct: Option<bool>,
    /// ChrF++ for prefix probing.
    pub metric_value: Option<f64>,
    pub prediction: Option<String>,
    pub pred_title: Option<String>,
    pub pred_author: Option<String>,
    pub author_correct: Option<bool>,
    pub error_class: Option<ErrorClass>,
    #[serde(default)]
    pub popular_name: bool,
    pub token_count: Option<usize>,
}

impl ScoreRecord {
    fn blank(task: TaskKind) -> Self {
        Self {
            passage_id: String::new(),
            book_id: String::new(),
            lang: String::new(),
            task,
            perturbation: Perturbation::Standard,
            endpoint: String::new(),
            correct: None,
            lenient_correct: None,
            metric_value: None,
            prediction: None,
            pred_title: None,
            pred_author: None,
            author_correct: None,
            error_class: None,
            popular_name: false,
            token_count: None,
        }
    }

    fn with_key(mut self, r: &ProbeResult) -> Self {
        self.passage_id = r.passage_id.clone();
        self.book_id = r.book_id.clone();
        self.lang = r.lang.clone();
        self.task = r.task;
        self.perturbation = r.perturbation;
        self.endpoint = r.endpoint.clone();
        self
    }
}

static QUOTED_FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)"+(title|author)"+\s*:\s*"+([^"]*)"+"#).unwrap());
static LINE_FIELD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?im)^[\s*#>\-]*(title|author)\s*\**\s*:\s*\**\s*(.+?)\s*$").unwrap());

fn labeled_fields(raw: &str) -> Vec<(String, String)> {
    let quoted: Vec<(String, String)> =
        QUOTED_FIELD.captures_iter(raw).map(|c| (c[1].to_lowercase(), c[2].trim().to_string())).collect();
    if !quoted.is_empty() {
        return quoted;
    }
    LINE_FIELD
        .captures_iter(raw)
        .map(|c| {
            let value = c[2].trim_matches(|ch: char| ch == '"' || ch == '*' || ch == ',' || ch.is_whitespace());
            (c[1].to_lowercase(), value.to_string())
        })
        .collect()
}

/// Extracts title and author from a direct-probe response: quoted labeled
/// fields first, then `title:` / `author:` lines. `None` when neither
/// label is present.
pub fn parse_dp_response(raw: &str) -> Option<DpAnswer> {
    let fields = labeled_fields(raw);
    if fields.is_empty() {
        return None;
    }
    let get = |label: &str| fields.iter().find(|(l, _)| l == label).map(|(_, v)| v.clone()).unwrap_or_default();
    Some(DpAnswer { title: get("title"), author: get("author") })
}

fn best_similarity<'a>(pred: &str, golds: impl Iterator<Item = &'a String>) -> f64 {
    let pred = normalize_text(pred);
    golds.map(|g| levenshtein_similarity(&pred, &normalize_text(g))).fold(0.0, f64::max)
}

/// Scores a parsed direct-probe answer against the book metadata. Titles
/// are accepted in English or in the passage language.
pub fn score_direct_probe(parsed: Option<&DpAnswer>, gold: &BookMeta, lang: &str, cfg: &ScoreConfig) -> ScoreRecord {
    let mut rec = ScoreRecord::blank(TaskKind::DirectProbe);
    rec.book_id = gold.book_id.clone();
    rec.lang = lang.to_string();
    let Some(ans) = parsed else {
        rec.correct = Some(false);
        return rec;
    };
    let author_ok = best_similarity(&ans.author, std::iter::once(&gold.author)) >= cfg.dp_fuzzy_threshold;
    let titles = gold.titles.get(ENGLISH).into_iter().chain(gold.titles.get(lang)).flatten();
    let title_ok = best_similarity(&ans.title, titles) >= cfg.dp_fuzzy_threshold;
    rec.pred_title = Some(ans.title.clone());
    rec.pred_author = Some(ans.author.clone());
    rec.author_correct = Some(author_ok);
    rec.correct = Some(author_ok && title_ok);
    rec
}

const STOP_WORDS: &[&str] = &[
    "i",
    "i'm",
    "i'd",
    "i'll",
    "i've",
    "the",
    "a",
    "an",
    "based",
    "however",
    "this",
    "that",
    "these",
    "those",
    "it",
    "its",
    "it's",
    "in",
    "on",
    "of",
    "my",
    "answer",
    "name",
    "names",
    "therefore",
    "so",
    "since",
    "given",
    "as",
    "there",
    "here",
    "if",
    "but",
    "and",
    "or",
    "note",
    "mask",
    "unknown",
    "none",
    "yes",
    "no",
    "sure",
    "okay",
    "ok",
    "final",
    "guess",
    "proper",
    "character",
    "context",
    "passage",
    "book",
    "he",
    "she",
    "they",
    "his",
    "her",
    "him",
    "them",
    "we",
    "you",
    "what",
    "which",
    "who",
    "more",
    "plausible",
    "such",
    "then",
    "also",
    "thus",
    "hence",
    "perhaps",
    "maybe",
    "likely",
    "probably",
    "unfortunately",
    "sorry",
    "without",
    "with",
    "from",
    "to",
    "for",
    "is",
    "was",
    "are",
    "would",
    "could",
    "should",
    "can",
    "will",
    "let",
    "let's",
    "after",
    "before",
    "when",
    "while",
    "because",
    "title",
    "author",
    "output",
    "response",
    "one",
    "another",
    "other",
    "possible",
    "option",
];

const ABBREVIATIONS: &[&str] =
    &["mr.", "mrs.", "ms.", "dr.", "st.", "sr.", "jr.", "prof.", "capt.", "col.", "gen.", "lt."];

/// Removes text inside double quotes (straight or curly).
fn outside_quotes(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut inside = false;
    for c in raw.chars() {
        match c {
            '"' => inside = !inside,
            '\u{201c}' => inside = true,
            '\u{201d}' => inside = false,
            _ if !inside => out.push(c),
            _ => out.push(' '),
        }
    }
    out
}

fn capitalized_runs(text: &str) -> Vec<String> {
    let mut runs = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let flush = |current: &mut Vec<String>, runs: &mut Vec<String>| {
        if !current.is_empty() {
            runs.push(current.join(" "));
            current.clear();
        }
    };
    for token in text.split_whitespace() {
        let core = token.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'' && c != '.');
        let core = core.trim_start_matches(['\'', '.']).trim_end_matches('\'');
        let lower = core.to_lowercase();
        let is_abbrev = ABBREVIATIONS.contains(&lower.as_str());
        let word = if is_abbrev { core } else { core.trim_end_matches('.') };
        let capitalized = word.chars().next().is_some_and(char::is_uppercase);
        let stop = STOP_WORDS.contains(&word.to_lowercase().as_str()) || token.contains(MASK_TOKEN);
        if capitalized && !stop {
            current.push(word.to_string());
            let ends_clause =
                token.ends_with([',', ';', ':', '!', '?', ')', '"']) || (token.ends_with('.') && !is_abbrev);
            if ends_clause {
                flush(&mut current, &mut runs);
            }
        } else {
            flush(&mut current, &mut runs);
        }
    }
    flush(&mut current, &mut runs);
    runs
}

/// Name-like candidates in a cloze response, in order of appearance.
/// Quoted text is ignored unless it holds the only candidates.
pub fn name_candidates(raw: &str) -> Vec<String> {
    let runs = capitalized_runs(&outside_quotes(raw));
    if runs.is_empty() {
        capitalized_runs(raw)
    } else {
        runs
    }
}

/// The predicted name: a candidate picked by `mode`, or the first
/// non-empty line of the response when nothing name-like was found.
pub fn extract_name(raw: &str, mode: NameExtraction) -> String {
    let candidates = name_candidates(raw);
    let pick = match mode {
        NameExtraction::Last => candidates.last(),
        NameExtraction::First => candidates.first(),
    };
    match pick {
        Some(c) => c.clone(),
        None => raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("").to_string(),
    }
}

/// Exact match after normalization against the English gold name or the
/// alias used in the passage language.
pub fn score_name_cloze(raw: &str, passage: &Passage, lang: &str, cfg: &ScoreConfig) -> ScoreRecord {
    let mut rec = ScoreRecord::blank(TaskKind::NameCloze);
    rec.passage_id = passage.passage_id.clone();
    rec.book_id = passage.book_id.clone();
    rec.lang = lang.to_string();
    let prediction = extract_name(raw, cfg.name_extraction);
    let golds: Vec<&String> = passage.gold_name.iter().chain(passage.name_aliases.get(lang)).collect();
    let pred_norm = normalize_text(&prediction);
    rec.correct = Some(!pred_norm.is_empty() && golds.iter().any(|g| normalize_text(g) == pred_norm));
    rec.lenient_correct =
        Some(!pred_norm.is_empty() && best_similarity(&prediction, golds.into_iter()) >= cfg.nc_fuzzy_threshold);
    rec.prediction = Some(prediction);
    rec
}

pub fn score_prefix_probe(raw: &str, gold_continuation: &str, cfg: &MetricConfig) -> ScoreRecord {
    let mut rec = ScoreRecord::blank(TaskKind::PrefixProbe);
    rec.metric_value = Some(chrf_pp(raw, gold_continuation, cfg));
    rec
}

/// Ground truth an incorrect answer is compared against.
pub enum Gold<'a> {
    Book(&'a BookMeta),
    Name { name: &'a str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Script {
    Latin,
    Cjk,
    Cyrillic,
    Greek,
    Arabic,
    Hebrew,
    Devanagari,
    Other,
}

fn script_of(c: char) -> Script {
    match c as u32 {
        0x0041..=0x024F | 0x1E00..=0x1EFF => Script::Latin,
        0x0370..=0x03FF => Script::Greek,
        0x0400..=0x04FF => Script::Cyrillic,
        0x0590..=0x05FF => Script::Hebrew,
        0x0600..=0x06FF => Script::Arabic,
        0x0900..=0x097F => Script::Devanagari,
        0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xAC00..=0xD7AF => Script::Cjk,
        _ => Script::Other,
    }
}

/// Mixed scripts or a high share of symbol characters.
pub fn looks_broken(raw: &str, cfg: &ScoreConfig) -> bool {
    let mut scripts: HashMap<Script, usize> = HashMap::new();
    let mut letters = 0usize;
    let mut symbols = 0usize;
    let mut total = 0usize;
    for c in raw.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if c.is_alphabetic() {
            letters += 1;
            *scripts.entry(script_of(c)).or_default() += 1;
        } else if !c.is_numeric() && !c.is_ascii_punctuation() && !"“”‘’…–—".contains(c) {
            symbols += 1;
        }
    }
    if total == 0 {
        return false;
    }
    let significant = scripts.values().filter(|&&n| n as f64 >= cfg.mixed_script_share * letters as f64).count();
    significant >= 2 || symbols as f64 > cfg.non_text_ratio * total as f64
}

fn is_abstention(raw: &str, cfg: &ScoreConfig) -> bool {
    let normalized = normalize_text(raw);
    if cfg.abstention_markers.iter().any(|m| normalize_text(m) == normalized) {
        return true;
    }
    let lower = raw.to_lowercase();
    cfg.abstention_phrases.iter().any(|p| lower.contains(&p.to_lowercase()))
}

/// Labels an incorrect record; the first matching rule wins (see module docs).
pub fn classify_error(
    record: &ScoreRecord,
    raw: &str,
    gold: &Gold,
    roster: &[Character],
    cfg: &ScoreConfig,
) -> ErrorClass {
    let lang = record.lang.as_str();
    if is_abstention(raw, cfg) {
        return ErrorClass::Abstention;
    }
    let candidates = name_candidates(raw);
    if raw.contains(MASK_TOKEN) && candidates.is_empty() {
        return ErrorClass::MaskEcho;
    }
    let prediction = match record.task {
        TaskKind::DirectProbe => record.pred_author.clone().unwrap_or_default(),
        _ => record.prediction.clone().unwrap_or_else(|| extract_name(raw, cfg.name_extraction)),
    };
    let pred_norm = normalize_text(&prediction);
    if record.task == TaskKind::NameCloze {
        if cfg.in_list(&cfg.pronouns, lang, &pred_norm) {
            return ErrorClass::Pronoun;
        }
        if cfg.in_list(&cfg.honorifics, lang, &pred_norm) {
            return ErrorClass::Honorific;
        }
        if let Gold::Name { name } = gold {
            let other = roster
                .iter()
                .filter(|c| c.name != *name)
                .any(|c| c.all_aliases().any(|a| normalize_text(a) == pred_norm));
            if other {
                return ErrorClass::SameBookEntity;
            }
        }
    }
    if record.task == TaskKind::DirectProbe && record.author_correct == Some(true) {
        return ErrorClass::CorrectAuthorWrongTitle;
    }
    let distinct: BTreeSet<String> = match record.task {
        TaskKind::DirectProbe => {
            labeled_fields(raw).into_iter().filter(|(l, _)| l == "title").map(|(_, v)| normalize_text(&v)).collect()
        }
        _ => candidates.iter().map(|c| normalize_text(c)).collect(),
    };
    if distinct.len() >= 2 {
        return ErrorClass::MultiGuess;
    }
    if looks_broken(raw, cfg) {
        return ErrorClass::BrokenOutput;
    }
    ErrorClass::OtherWrong
}

/// Everything needed to score a run's raw results.
pub struct ScoringContext<'a> {
    pub passages: HashMap<&'a str, &'a Passage>,
    pub books: &'a BTreeMap<String, BookMeta>,
    pub gazetteer: &'a CharacterGazetteer,
    pub config: &'a ScoreConfig,
    pub metric: &'a MetricConfig,
    pub prefix_split: PrefixSplit,
}

impl<'a> ScoringContext<'a> {
    pub fn new(
        dataset: &'a [Passage],
        books: &'a BTreeMap<String, BookMeta>,
        gazetteer: &'a CharacterGazetteer,
        config: &'a ScoreConfig,
        metric: &'a MetricConfig,
    ) -> Self {
        Self {
            passages: dataset.iter().map(|p| (p.passage_id.as_str(), p)).collect(),
            books,
            gazetteer,
            config,
            metric,
            prefix_split: PrefixSplit::default(),
        }
    }

    /// Scores one successful probe result. Returns `None` for error rows
    /// and results whose passage or book is unknown.
    pub fn score(&self, r: &ProbeResult) -> Option<ScoreRecord> {
        if r.status != ResultStatus::Ok {
            return None;
        }
        let passage = *self.passages.get(r.passage_id.as_str())?;
        let roster = self.gazetteer.books.get(&passage.book_id).map(Vec::as_slice).unwrap_or(&[]);
        let mut rec = match r.task {
            TaskKind::DirectProbe => {
                let book = self.books.get(&passage.book_id)?;
                let parsed = parse_dp_response(&r.raw_response);
                let mut rec = score_direct_probe(parsed.as_ref(), book, &r.lang, self.config).with_key(r);
                if rec.correct == Some(false) {
                    rec.error_class =
                        Some(classify_error(&rec, &r.raw_response, &Gold::Book(book), roster, self.config));
                }
                rec
            }
            TaskKind::NameCloze => {
                let mut rec = score_name_cloze(&r.raw_response, passage, &r.lang, self.config).with_key(r);
                if rec.correct == Some(false) {
                    let name = passage.gold_name.as_deref().unwrap_or("");
                    let class = classify_error(&rec, &r.raw_response, &Gold::Name { name }, roster, self.config);
                    if class == ErrorClass::OtherWrong {
                        let pred = normalize_text(rec.prediction.as_deref().unwrap_or(""));
                        rec.popular_name = self.config.in_list(&self.config.popular_names, &r.lang, &pred);
                    }
                    rec.error_class = Some(class);
                }
                rec
            }
            TaskKind::PrefixProbe => {
                let text = passage_variant(passage, &r.lang, r.perturbation).ok()?;
                let (_, gold) = split_prefix(&text, self.prefix_split);
                score_prefix_probe(&r.raw_response, &gold, self.metric).with_key(r)
            }
        };
        rec.token_count = passage.token_counts.get(&r.lang).copied();
        Some(rec)
    }

    /// Scores every row, sorted by probe key.
    pub fn score_all(&self, results: &[ProbeResult]) -> Vec<ScoreRecord> {
        let mut rows: Vec<&ProbeResult> = results.iter().collect();
        rows.sort_by_key(|a| a.key());
        rows.into_iter().filter_map(|r| self.score(r)).collect()
    }
}

/// Serializes score records as JSONL, one record per line.
pub fn to_jsonl(records: &[ScoreRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("score record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dune() -> BookMeta {
        BookMeta {
            book_id: "dune".into(),
            author: "Frank Herbert".into(),
            titles: BTreeMap::from([("en".into(), vec!["Dune".into()]), ("vi".into(), vec!["Xứ cát".into()])]),
            pub_years: BTreeMap::new(),
            copyrighted: true,
        }
    }

    fn cloze_passage(name: &str, alias_lang: &str, alias: &str) -> Passage {
        Passage {
            passage_id: "p".into(),
            book_id: "tale".into(),
            texts: BTreeMap::from([(alias_lang.to_string(), "x".into())]),
            gold_name: Some(name.into()),
            name_aliases: BTreeMap::from([(alias_lang.to_string(), alias.to_string())]),
            has_character: true,
            masked_texts: BTreeMap::from([(alias_lang.to_string(), "[MASK]".into())]),
            token_counts: BTreeMap::new(),
            token_counter: String::new(),
        }
    }

    fn roster() -> Vec<Character> {
        ["Mr.Lorry", "Charles", "Lucie"]
            .iter()
            .map(|n| Character { name: n.to_string(), aliases: BTreeMap::from([("en".into(), vec![n.to_string()])]) })
            .collect()
    }

    #[test]
    fn parses_dp_formats() {
        assert_eq!(
            parse_dp_response(r#""title": "Dune", "author": "Frank Herbert""#),
            Some(DpAnswer { title: "Dune".into(), author: "Frank Herbert".into() })
        );
        assert_eq!(
            parse_dp_response("title: 1984\nauthor: George Orwell"),
            Some(DpAnswer { title: "1984".into(), author: "George Orwell".into() })
        );
        assert_eq!(
            parse_dp_response(r#""""title"": ""Nineteen Eighty-Four"", ""author"": ""George Orwell""""#),
            Some(DpAnswer { title: "Nineteen Eighty-Four".into(), author: "George Orwell".into() })
        );
        assert_eq!(
            parse_dp_response("**Title:** Dune\n**Author:** Frank Herbert"),
            Some(DpAnswer { title: "Dune".into(), author: "Frank Herbert".into() })
        );
        assert_eq!(parse_dp_response("I think this is a lovely story about sand."), None);
    }

    #[test]
    fn direct_probe_scoring() {
        let cfg = ScoreConfig::default();
        let ans = |t: &str, a: &str| DpAnswer { title: t.into(), author: a.into() };
        assert_eq!(score_direct_probe(Some(&ans("Dune", "Frank Herbert")), &dune(), "en", &cfg).correct, Some(true));
        assert_eq!(score_direct_probe(Some(&ans("Xứ cát", "Frank Herbert")), &dune(), "vi", &cfg).correct, Some(true));
        assert_eq!(score_direct_probe(Some(&ans("Xu cat", "Frank Herbert")), &dune(), "vi", &cfg).correct, Some(true));
        assert_eq!(score_direct_probe(Some(&ans("Xứ cát", "Frank Herbert")), &dune(), "es", &cfg).correct, Some(false));
        assert_eq!(score_direct_probe(None, &dune(), "en", &cfg).correct, Some(false));

        let rec = score_direct_probe(Some(&ans("Dune Messiah", "Frank Herbert")), &dune(), "en", &cfg);
        assert_eq!(rec.correct, Some(false));
        let raw = r#""title": "Dune Messiah", "author": "Frank Herbert""#;
        assert_eq!(classify_error(&rec, raw, &Gold::Book(&dune()), &[], &cfg), ErrorClass::CorrectAuthorWrongTitle);
    }

    #[test]
    fn name_cloze_scoring() {
        let cfg = ScoreConfig::default();
        let p = cloze_passage("Tom", "en", "Tom");
        assert_eq!(score_name_cloze("Tom", &p, "en", &cfg).correct, Some(true));
        assert_eq!(score_name_cloze("tom.", &p, "en", &cfg).correct, Some(true));
        assert_eq!(score_name_cloze("The answer is Tom.", &p, "en", &cfg).correct, Some(true));
        assert_eq!(score_name_cloze("Tim", &p, "en", &cfg).correct, Some(false));

        let lorry = cloze_passage("Mr.Lorry", "en", "Mr.Lorry");
        let rec = score_name_cloze("Mr.", &lorry, "en", &cfg);
        assert_eq!(rec.correct, Some(false));
        assert_eq!(
            classify_error(&rec, "Mr.", &Gold::Name { name: "Mr.Lorry" }, &roster(), &cfg),
            ErrorClass::Honorific
        );
        let rec = score_name_cloze("Charles", &lorry, "en", &cfg);
        assert_eq!(
            classify_error(&rec, "Charles", &Gold::Name { name: "Mr.Lorry" }, &roster(), &cfg),
            ErrorClass::SameBookEntity
        );
    }

    #[test]
    fn lenient_column_is_separate() {
        let cfg = ScoreConfig::default();
        let p = cloze_passage("Hermione", "en", "Hermione");
        let rec = score_name_cloze("Hermoine", &p, "en", &cfg);
        assert_eq!(rec.correct, Some(false));
        assert_eq!(rec.lenient_correct, Some(true));
    }

    #[test]
    fn alias_in_passage_language_counts() {
        let cfg = ScoreConfig::default();
        let p = cloze_passage("Winston", "tr", "Vinston");
        assert_eq!(score_name_cloze("Vinston", &p, "tr", &cfg).correct, Some(true));
        assert_eq!(score_name_cloze("Winston", &p, "tr", &cfg).correct, Some(true));
    }

    #[test]
    fn multi_guess_example_extracts_last_answer() {
        let raw = "Based on the context of the passage, I'm going to take a guess that the proper name that fills the [MASK] token is: Fahrenheit.\n\nHowever, this seems unlikely, as \"Fahrenheit\" is a title of a book, not a character's name. A more plausible guess would be a character from a dystopian novel, such as \"Fahrenheit 451\".\n\nMildred";
        assert_eq!(extract_name(raw, NameExtraction::Last), "Mildred");
        assert_eq!(extract_name(raw, NameExtraction::First), "Fahrenheit");
        let cfg = ScoreConfig::default();
        let p = cloze_passage("Hermione", "en", "Hermione");
        let rec = score_name_cloze(raw, &p, "en", &cfg);
        assert_eq!(rec.correct, Some(false));
        assert_eq!(classify_error(&rec, raw, &Gold::Name { name: "Hermione" }, &[], &cfg), ErrorClass::MultiGuess);
    }

    #[test]
    fn taxonomy_rules() {
        let cfg = ScoreConfig::default();
        let p = cloze_passage("Tom", "en", "Tom");
        let gold = Gold::Name { name: "Tom" };
        let class = |raw: &str| {
            let rec = score_name_cloze(raw, &p, "en", &cfg);
            classify_error(&rec, raw, &gold, &[], &cfg)
        };
        assert_eq!(class(""), ErrorClass::Abstention);
        assert_eq!(class("None"), ErrorClass::Abstention);
        assert_eq!(class("[MASK]"), ErrorClass::MaskEcho);
        assert_eq!(class("He"), ErrorClass::Pronoun);
        assert_eq!(class("Ataturk"), ErrorClass::OtherWrong);

        let dp = score_direct_probe(
            parse_dp_response(r#""title": "Book name: Unknown", "author": "Unknown author""#).as_ref(),
            &dune(),
            "en",
            &cfg,
        );
        let raw = r#""title": "Book name: Unknown", "author": "Unknown author""#;
        assert_eq!(classify_error(&dp, raw, &Gold::Book(&dune()), &[], &cfg), ErrorClass::Abstention);
        assert_eq!(classify_error(&dp, "Unknown author", &Gold::Book(&dune()), &[], &cfg), ErrorClass::Abstention);

        let broken = "\"title\": \".kハウス absorbing richesて舟へ.\", \"author\": \"魚つり人才育てる(Balls to Become a Fishing Pro 魚つり人才を作り出す!)\"";
        let dp = score_direct_probe(parse_dp_response(broken).as_ref(), &dune(), "en", &cfg);
        assert_eq!(classify_error(&dp, broken, &Gold::Book(&dune()), &[], &cfg), ErrorClass::BrokenOutput);

        let wrong = r#""title": "Altered Carbon", "author": "Richard K. Morgan""#;
        let dp = score_direct_probe(parse_dp_response(wrong).as_ref(), &dune(), "en", &cfg);
        assert_eq!(classify_error(&dp, wrong, &Gold::Book(&dune()), &[], &cfg), ErrorClass::OtherWrong);
    }

    #[test]
    fn broken_detection() {
        let cfg = ScoreConfig::default();
        assert!(!looks_broken("Tom Sawyer", &cfg));
        assert!(!looks_broken("Xứ cát", &cfg));
        assert!(looks_broken("Tom ハウス魚つり", &cfg));
        assert!(looks_broken("@@ ## $$ %% ^^ ~~ ab", &cfg) || looks_broken("§§§§ ab", &cfg));
    }

    #[test]
    fn prefix_probe_scoring() {
        let m = MetricConfig::default();
        assert_eq!(score_prefix_probe("the rest of it", "the rest of it", &m).metric_value, Some(100.0));
        assert_eq!(score_prefix_probe("", "the rest of it", &m).metric_value, Some(0.0));
    }
}
