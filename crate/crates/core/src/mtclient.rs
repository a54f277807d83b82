//! Machine translation into new languages: pluggable providers with retry
//! and fallback, placeholder protection for `[MASK]`, and translation QC.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Lang, Passage, ENGLISH};
use crate::perturb::{protect_placeholders, restore_placeholders, PLACEHOLDER};
use crate::probe::{ChatEndpoint, ChatMessage, ChatRequest};
use crate::retry::{bounded_map, RetryPolicy, Transient};
use crate::sampler::{ensure_token_counts, TokenizerHandle};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider failure: {0}")]
    Permanent(String),
}

impl Transient for ProviderError {
    fn is_transient(&self) -> bool {
        matches!(self, ProviderError::Transient(_))
    }
}

#[derive(Debug, Error)]
pub enum TranslateError {
    #[error("all providers failed for inputs {failed:?}: {last_error}")]
    Exhausted { failed: Vec<usize>, last_error: ProviderError },
}

/// A translation backend. Implementations must return exactly one output
/// per input, in order.
pub trait TranslationProvider: Send + Sync {
    fn name(&self) -> &str;
    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError>;
}

#[derive(Serialize)]
struct TranslateRequestBody<'a> {
    source_lang: &'a str,
    target_lang: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct TranslateResponseBody {
    translations: Vec<String>,
}

/// Classifies an HTTP status into retryable or not.
pub(crate) fn status_error(status: u16, body: &str) -> ProviderError {
    let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
    if status == 408 || status == 429 || status >= 500 {
        ProviderError::Transient(msg)
    } else {
        ProviderError::Permanent(msg)
    }
}

/// Provider speaking the generic translate wire format: `POST <url>` with
/// `{"source_lang", "target_lang", "texts"}` answered by `{"translations"}`.
/// The bearer token is read from `api_key_env` at request time.
pub struct HttpTranslateProvider {
    name: String,
    url: String,
    api_key_env: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTranslateProvider {
    pub fn new(name: impl Into<String>, url: impl Into<String>, api_key_env: Option<String>) -> Self {
        let client =
            reqwest::blocking::Client::builder().timeout(Duration::from_secs(60)).build().expect("http client");
        Self { name: name.into(), url: url.into(), api_key_env, client }
    }
}

impl TranslationProvider for HttpTranslateProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError> {
        let body = TranslateRequestBody { source_lang: src, target_lang: tgt, texts };
        log::debug!(
            "translate -> {} [{}]: {} texts {src}->{tgt}, authorization=<redacted>",
            self.name,
            self.url,
            texts.len()
        );
        let mut req = self.client.post(&self.url).json(&body);
        if let Some(key) = self.api_key_env.as_deref().and_then(|v| std::env::var(v).ok()) {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.text().map_err(|e| ProviderError::Transient(e.to_string()))?;
        log::debug!("translate <- {} status {status}, {} bytes", self.name, text.len());
        if !(200..300).contains(&status) {
            return Err(status_error(status, &text));
        }
        let parsed: TranslateResponseBody =
            serde_json::from_str(&text).map_err(|e| ProviderError::Permanent(format!("bad response body: {e}")))?;
        Ok(parsed.translations)
    }
}

pub const PIVOT_TEMPLATE: &str = include_str!("../templates/translation.v1.md");

/// Translates one text at a time through a chat endpoint using the pivot
/// translation template (used to produce English pivots of official
/// translations).
pub struct ChatTranslateProvider {
    endpoint: Arc<dyn ChatEndpoint>,
    model: String,
    temperature: f64,
    max_tokens: u32,
}

impl ChatTranslateProvider {
    pub fn new(endpoint: Arc<dyn ChatEndpoint>, model: impl Into<String>) -> Self {
        Self { endpoint, model: model.into(), temperature: 0.3, max_tokens: 4000 }
    }
}

impl TranslationProvider for ChatTranslateProvider {
    fn name(&self) -> &str {
        self.endpoint.id()
    }

    fn translate(&self, texts: &[String], src: &str, tgt: &str) -> Result<Vec<String>, ProviderError> {
        texts
            .iter()
            .map(|t| {
                let prompt = PIVOT_TEMPLATE
                    .replace("{source_language}", crate::probe::language_name(src))
                    .replace("{target_language}", crate::probe::language_name(tgt))
                    .replace("{passage}", t);
                let req = ChatRequest {
                    model: self.model.clone(),
                    messages: vec![ChatMessage::user(prompt)],
                    temperature: self.temperature,
                    max_tokens: self.max_tokens,
                };
                self.endpoint.complete(&req).map(|s| s.trim().to_string()).map_err(|e| {
                    if e.is_transient() {
                        ProviderError::Transient(e.to_string())
                    } else {
                        ProviderError::Permanent(e.to_string())
                    }
                })
            })
            .collect()
    }
}

/// Translations for a batch plus which provider produced each one.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchTranslation {
    pub texts: Vec<String>,
    pub provenance: Vec<String>,
}

pub struct Translator {
    pub primary: Arc<dyn TranslationProvider>,
    pub fallback: Option<Arc<dyn TranslationProvider>>,
    pub retry: RetryPolicy,
    pub chunk_size: usize,
    pub max_in_flight: usize,
}

impl Translator {
    pub fn new(primary: Arc<dyn TranslationProvider>, fallback: Option<Arc<dyn TranslationProvider>>) -> Self {
        Self { primary, fallback, retry: RetryPolicy::default(), chunk_size: 25, max_in_flight: 4 }
    }

    fn call(
        &self,
        provider: &dyn TranslationProvider,
        chunk: &[String],
        src: &str,
        tgt: &str,
    ) -> Result<Vec<String>, ProviderError> {
        let (res, _) = self.retry.run(|_| {
            let out = provider.translate(chunk, src, tgt)?;
            if out.len() != chunk.len() {
                return Err(ProviderError::Permanent(format!(
                    "{} returned {} translations for {} inputs",
                    provider.name(),
                    out.len(),
                    chunk.len()
                )));
            }
            Ok(out)
        });
        res
    }

    /// Translates `texts` in order. Chunks that keep failing on the primary
    /// provider are sent to the fallback.
    pub fn translate_batch(&self, texts: &[String], src: &str, tgt: &str) -> Result<BatchTranslation, TranslateError> {
        let chunks: Vec<&[String]> = texts.chunks(self.chunk_size.max(1)).collect();
        let results = bounded_map(&chunks, self.max_in_flight, |_, chunk| {
            match self.call(self.primary.as_ref(), chunk, src, tgt) {
                Ok(out) => Ok((out, self.primary.name().to_string())),
                Err(primary_err) => {
                    let Some(fallback) = &self.fallback else {
                        return Err(primary_err);
                    };
                    log::warn!(
                        "primary translator {} failed ({primary_err}); using {}",
                        self.primary.name(),
                        fallback.name()
                    );
                    self.call(fallback.as_ref(), chunk, src, tgt).map(|out| (out, fallback.name().to_string()))
                }
            }
        });
        let mut out =
            BatchTranslation { texts: Vec::with_capacity(texts.len()), provenance: Vec::with_capacity(texts.len()) };
        let mut failed = Vec::new();
        let mut last_error = None;
        let mut offset = 0;
        for (chunk, res) in chunks.iter().zip(results) {
            match res {
                Ok((texts, provider)) => {
                    out.provenance.extend(std::iter::repeat_n(provider, texts.len()));
                    out.texts.extend(texts);
                }
                Err(e) => {
                    failed.extend(offset..offset + chunk.len());
                    last_error = Some(e);
                }
            }
            offset += chunk.len();
        }
        match last_error {
            Some(last_error) => Err(TranslateError::Exhausted { failed, last_error }),
            None => Ok(out),
        }
    }

    /// Translates with the fallback provider only.
    pub fn translate_fallback(
        &self,
        texts: &[String],
        src: &str,
        tgt: &str,
    ) -> Option<Result<BatchTranslation, ProviderError>> {
        let fallback = self.fallback.as_ref()?;
        Some(
            self.call(fallback.as_ref(), texts, src, tgt)
                .map(|out| BatchTranslation { provenance: vec![fallback.name().to_string(); out.len()], texts: out }),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QcReason {
    PlaceholderMismatch,
    NgramRepetition,
    LanguageMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QcVerdict {
    pub ok: bool,
    pub reasons: BTreeSet<QcReason>,
}

impl QcVerdict {
    fn from_reasons(reasons: BTreeSet<QcReason>) -> Self {
        Self { ok: reasons.is_empty(), reasons }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct QcConfig {
    /// Window length in whitespace tokens.
    pub ngram_window: usize,
    /// A window seen this many times flags the translation.
    pub max_repeats: usize,
}

impl Default for QcConfig {
    fn default() -> Self {
        Self { ngram_window: 15, max_repeats: 3 }
    }
}

/// Language identification for the "did the translation come back in
/// English?" check.
pub trait LanguageDetector: Send + Sync {
    fn detect(&self, text: &str) -> Lang;
}

const ENGLISH_STOPWORDS: &[&str] = &[
    "the", "and", "of", "to", "a", "in", "was", "he", "it", "that", "is", "his", "her", "she", "i", "you", "with",
    "for", "on", "had", "as", "at", "not", "but", "be", "they", "we", "this", "my", "have", "from", "by", "were",
    "him", "me", "all", "said", "so", "what", "there", "would", "if", "an", "or", "out", "up", "when", "which", "been",
    "do", "could", "them", "then", "into", "did", "are", "will", "your", "their", "one",
];

/// Script + stop-word heuristic: mostly Latin letters and at least
/// `min_stopword_ratio` common English function words means `en`; anything
/// else is `und`.
#[derive(Debug, Clone)]
pub struct HeuristicDetector {
    pub min_stopword_ratio: f64,
    pub min_words: usize,
}

impl Default for HeuristicDetector {
    fn default() -> Self {
        Self { min_stopword_ratio: 0.3, min_words: 4 }
    }
}

impl LanguageDetector for HeuristicDetector {
    fn detect(&self, text: &str) -> Lang {
        let letters: Vec<char> = text.chars().filter(|c| c.is_alphabetic()).collect();
        if letters.is_empty() {
            return "und".into();
        }
        let ascii = letters.iter().filter(|c| c.is_ascii_alphabetic()).count();
        if (ascii as f64) < 0.9 * letters.len() as f64 {
            return "und".into();
        }
        let words: Vec<String> = text
            .split_whitespace()
            .filter(|w| !w.contains(PLACEHOLDER))
            .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        if words.len() < self.min_words {
            return "und".into();
        }
        let hits = words.iter().filter(|w| ENGLISH_STOPWORDS.contains(&w.as_str())).count();
        if hits as f64 >= self.min_stopword_ratio * words.len() as f64 {
            ENGLISH.into()
        } else {
            "und".into()
        }
    }
}

/// Number of times the most frequent `window`-token n-gram occurs.
pub fn max_ngram_repeats(text: &str, window: usize) -> usize {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if window == 0 || tokens.len() < window {
        return 0;
    }
    let mut counts: HashMap<&[&str], usize> = HashMap::new();
    for w in tokens.windows(window) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts.into_values().max().unwrap_or(0)
}

/// The three translation checks: placeholder count equality, repeated
/// n-grams, and the output not being detected as English.
pub fn qc_translation(
    original_protected: &str,
    translation: &str,
    tgt: &str,
    detector: &dyn LanguageDetector,
    cfg: &QcConfig,
) -> QcVerdict {
    let mut reasons = BTreeSet::new();
    if original_protected.matches(PLACEHOLDER).count() != translation.matches(PLACEHOLDER).count() {
        reasons.insert(QcReason::PlaceholderMismatch);
    }
    if max_ngram_repeats(translation, cfg.ngram_window) >= cfg.max_repeats {
        reasons.insert(QcReason::NgramRepetition);
    }
    if tgt != ENGLISH && detector.detect(translation) == ENGLISH {
        reasons.insert(QcReason::LanguageMismatch);
    }
    QcVerdict::from_reasons(reasons)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deletion {
    pub passage_id: String,
    pub lang: Lang,
    pub reasons: BTreeSet<QcReason>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TranslationOutcome {
    pub passages: Vec<Passage>,
    pub deleted: Vec<Deletion>,
    /// (passage_id, lang) → provider that produced the accepted translation.
    pub provenance: BTreeMap<String, BTreeMap<Lang, String>>,
}

struct Job {
    passage: usize,
    masked: bool,
    source: String,
}

fn verdict_for(
    jobs: &[&Job],
    outs: &[&String],
    tgt: &str,
    detector: &dyn LanguageDetector,
    qc: &QcConfig,
) -> QcVerdict {
    let mut reasons = BTreeSet::new();
    for (job, out) in jobs.iter().zip(outs) {
        reasons.extend(qc_translation(&job.source, out, tgt, detector, qc).reasons);
    }
    QcVerdict::from_reasons(reasons)
}

/// Extends English passages with machine translations into `tgt_langs`.
///
/// The standard text and (for passages with a character) the placeholder-
/// protected masked text are translated by the primary provider. A passage
/// failing QC is retranslated with the fallback; failing again removes the
/// passage from the dataset in every language.
pub fn translate_passages(
    passages: Vec<Passage>,
    tgt_langs: &[Lang],
    translator: &Translator,
    detector: &dyn LanguageDetector,
    qc: &QcConfig,
) -> Result<TranslationOutcome, TranslateError> {
    let mut passages = passages;
    let mut outcome = TranslationOutcome::default();
    let mut deleted: BTreeSet<usize> = BTreeSet::new();

    for tgt in tgt_langs {
        let mut jobs = Vec::new();
        for (i, p) in passages.iter().enumerate() {
            if deleted.contains(&i) {
                continue;
            }
            jobs.push(Job { passage: i, masked: false, source: p.texts[ENGLISH].clone() });
            if let Some(masked) = p.masked_texts.get(ENGLISH) {
                jobs.push(Job { passage: i, masked: true, source: protect_placeholders(masked) });
            }
        }
        let sources: Vec<String> = jobs.iter().map(|j| j.source.clone()).collect();
        let batch = translator.translate_batch(&sources, ENGLISH, tgt)?;

        let mut by_passage: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, job) in jobs.iter().enumerate() {
            by_passage.entry(job.passage).or_default().push(k);
        }
        for (pidx, ks) in by_passage {
            let pjobs: Vec<&Job> = ks.iter().map(|&k| &jobs[k]).collect();
            let mut outs: Vec<String> = ks.iter().map(|&k| batch.texts[k].clone()).collect();
            let mut provider = batch.provenance[ks[0]].clone();
            let mut verdict = verdict_for(&pjobs, &outs.iter().collect::<Vec<_>>(), tgt, detector, qc);
            if !verdict.ok {
                let retry_sources: Vec<String> = pjobs.iter().map(|j| j.source.clone()).collect();
                if let Some(Ok(retry)) = translator.translate_fallback(&retry_sources, ENGLISH, tgt) {
                    let v = verdict_for(&pjobs, &retry.texts.iter().collect::<Vec<_>>(), tgt, detector, qc);
                    outs = retry.texts;
                    provider = retry.provenance[0].clone();
                    verdict = v;
                }
            }
            let id = passages[pidx].passage_id.clone();
            if !verdict.ok {
                log::info!("deleting passage {id}: {tgt} translation failed QC {:?}", verdict.reasons);
                deleted.insert(pidx);
                outcome.deleted.push(Deletion { passage_id: id, lang: tgt.clone(), reasons: verdict.reasons });
                continue;
            }
            let p = &mut passages[pidx];
            for (job, out) in pjobs.iter().zip(outs) {
                if job.masked {
                    p.masked_texts.insert(tgt.clone(), restore_placeholders(&out));
                } else {
                    p.texts.insert(tgt.clone(), out);
                }
            }
            if let Some(name) = &p.gold_name {
                p.name_aliases.insert(tgt.clone(), name.clone());
            }
            outcome.provenance.entry(id).or_default().insert(tgt.clone(), provider);
        }
    }

    let counter = TokenizerHandle::whitespace();
    outcome.passages = passages
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !deleted.contains(i))
        .map(|(_, mut p)| {
            // drop partial languages added before a later language failed
            p.token_counter.clear();
            ensure_token_counts(&mut p, &counter);
            p
        })
        .collect();
    for d in &outcome.deleted {
        outcome.provenance.remove(&d.passage_id);
    }
    Ok(outcome)
}
