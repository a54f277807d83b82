//! Prompt construction, chat-completion endpoints and the resumable probing
//! suite runner.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Lang, Passage, ENGLISH};
use crate::perturb::{derive_seed, shuffle_words, Perturbation};
use crate::retry::{RetryPolicy, Transient};

pub const TEMPLATE_VERSION: &str = "v1";
const DIRECT_PROBE_TEMPLATE: &str = include_str!("../templates/direct_probe.v1.md");
const NAME_CLOZE_TEMPLATE: &str = include_str!("../templates/name_cloze.v1.md");
const PREFIX_PROBE_TEMPLATE: &str = include_str!("../templates/prefix_probe.v1.md");

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("{task} cannot be combined with the {perturbation} perturbation")]
    InvalidTask { task: TaskKind, perturbation: Perturbation },
    #[error("passage {passage_id} has no {variant} text for `{lang}`")]
    MissingVariant { passage_id: String, variant: &'static str, lang: Lang },
    #[error("invalid endpoint config: {0}")]
    Config(String),
}

/// Human-readable language name used inside prompts.
pub fn language_name(code: &str) -> &str {
    match code {
        "en" => "English",
        "es" => "Spanish",
        "tr" => "Turkish",
        "vi" => "Vietnamese",
        "st" => "Sesotho",
        "yo" => "Yoruba",
        "tn" => "Setswana",
        "ty" => "Tahitian",
        "mai" => "Maithili",
        "mg" => "Malagasy",
        other => other,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    DirectProbe,
    NameCloze,
    PrefixProbe,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::DirectProbe => "direct_probe",
            TaskKind::NameCloze => "name_cloze",
            TaskKind::PrefixProbe => "prefix_probe",
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [TaskKind::DirectProbe, TaskKind::NameCloze, TaskKind::PrefixProbe]
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown task `{s}`"))
    }
}

/// A task paired with the passage variant it is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ProbeTask {
    pub kind: TaskKind,
    pub perturbation: Perturbation,
}

impl ProbeTask {
    pub fn new(kind: TaskKind, perturbation: Perturbation) -> Result<Self, ProbeError> {
        let ok = match kind {
            TaskKind::DirectProbe => true,
            TaskKind::NameCloze => perturbation.is_masked(),
            TaskKind::PrefixProbe => matches!(perturbation, Perturbation::Standard | Perturbation::NoCharacter),
        };
        if ok {
            Ok(Self { kind, perturbation })
        } else {
            Err(ProbeError::InvalidTask { task: kind, perturbation })
        }
    }

    /// Every valid task/perturbation combination.
    pub fn all() -> Vec<ProbeTask> {
        [TaskKind::DirectProbe, TaskKind::NameCloze, TaskKind::PrefixProbe]
            .into_iter()
            .flat_map(|k| Perturbation::ALL.into_iter().filter_map(move |p| ProbeTask::new(k, p).ok()))
            .collect()
    }

    /// Whether this task is run on `passage`: character-dependent variants
    /// need a character, `no_character` needs its absence.
    pub fn applies_to(&self, passage: &Passage) -> bool {
        match self.perturbation {
            Perturbation::Standard | Perturbation::Masked | Perturbation::MaskedShuffled => passage.has_character,
            Perturbation::NoCharacter => !passage.has_character,
            Perturbation::Shuffled => true,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/{}", self.kind, self.perturbation)
    }
}

impl std::str::FromStr for ProbeTask {
    type Err = String;

    /// Parses `kind/perturbation`, e.g. `name_cloze/masked`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, pert) = s.split_once('/').ok_or_else(|| format!("expected task/perturbation, got `{s}`"))?;
        ProbeTask::new(kind.parse()?, pert.parse()?).map_err(|e| e.to_string())
    }
}

/// Where the prefix/continuation boundary falls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrefixSplit {
    #[default]
    WordMidpoint,
    CharMidpoint,
}

/// Splits a passage into (prefix, continuation).
pub fn split_prefix(text: &str, mode: PrefixSplit) -> (String, String) {
    match mode {
        PrefixSplit::WordMidpoint => {
            let words: Vec<&str> = text.split_whitespace().collect();
            let mid = words.len() / 2;
            (words[..mid].join(" "), words[mid..].join(" "))
        }
        PrefixSplit::CharMidpoint => {
            let chars: Vec<char> = text.chars().collect();
            let mid = chars.len() / 2;
            let prefix: String = chars[..mid].iter().collect();
            let rest: String = chars[mid..].iter().collect();
            (prefix.trim_end().to_string(), rest.trim_start().to_string())
        }
    }
}

/// The passage text a perturbation presents for `lang`.
pub fn passage_variant(passage: &Passage, lang: &str, perturbation: Perturbation) -> Result<String, ProbeError> {
    let missing =
        |variant| ProbeError::MissingVariant { passage_id: passage.passage_id.clone(), variant, lang: lang.into() };
    let text = if perturbation.is_masked() {
        passage.masked_texts.get(lang).ok_or_else(|| missing("masked"))?
    } else {
        passage.texts.get(lang).ok_or_else(|| missing("standard"))?
    };
    if perturbation == Perturbation::NoCharacter && passage.has_character {
        return Err(missing("no-character"));
    }
    Ok(if perturbation.is_shuffled() {
        shuffle_words(text, derive_seed(&passage.passage_id, lang, perturbation.as_str()))
    } else {
        text.clone()
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prompt {
    pub messages: Vec<ChatMessage>,
    pub fingerprint: String,
}

pub fn fingerprint(messages: &[ChatMessage]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(TEMPLATE_VERSION.as_bytes());
    for m in messages {
        hasher.update([0x1e]);
        hasher.update(m.role.as_bytes());
        hasher.update([0x1f]);
        hasher.update(m.content.as_bytes());
    }
    hex::encode(&hasher.finalize()[..12])
}

/// Renders the prompt for `task` on `passage` in `lang`.
pub fn build_prompt(task: &ProbeTask, passage: &Passage, lang: &str, split: PrefixSplit) -> Result<Prompt, ProbeError> {
    let text = passage_variant(passage, lang, task.perturbation)?;
    let respond_english = if lang == ENGLISH { "" } else { " Respond in English." };
    let body = match task.kind {
        TaskKind::DirectProbe => DIRECT_PROBE_TEMPLATE
            .replace("{language}", language_name(lang))
            .replace("{response_language}", respond_english)
            .replace("{passage}", &text),
        TaskKind::NameCloze => NAME_CLOZE_TEMPLATE
            .replace("{language}", language_name(lang))
            .replace("{response_language}", respond_english)
            .replace("{passage}", &text),
        TaskKind::PrefixProbe => {
            let (prefix, _) = split_prefix(&text, split);
            PREFIX_PROBE_TEMPLATE.replace("{language}", language_name(lang)).replace("{passage}", &prefix)
        }
    };
    let messages = vec![ChatMessage::user(body.trim_end())];
    Ok(Prompt { fingerprint: fingerprint(&messages), messages })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    /// Identifier used in results; defaults to the model name.
    #[serde(default)]
    pub id: String,
    pub base_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
}

fn default_max_tokens() -> u32 {
    100
}

fn default_in_flight() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(id: impl Into<String>, base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            base_url: base_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_tokens: default_max_tokens(),
            max_in_flight: default_in_flight(),
            retry: RetryPolicy::default(),
            api_key_env: None,
        }
    }

    pub fn endpoint_id(&self) -> &str {
        if self.id.is_empty() {
            &self.model_name
        } else {
            &self.id
        }
    }

    pub fn validate(&self) -> Result<(), ProbeError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProbeError::Config("temperature must be >= 0".into()));
        }
        if self.max_tokens < 1 || self.max_in_flight < 1 {
            return Err(ProbeError::Config("max_tokens and max_in_flight must be >= 1".into()));
        }
        Ok(())
    }

    pub fn request(&self, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            model: self.model_name.clone(),
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EndpointError {
    #[error("transient endpoint failure: {0}")]
    Transient(String),
    #[error("endpoint failure: {0}")]
    Permanent(String),
}

impl Transient for EndpointError {
    fn is_transient(&self) -> bool {
        matches!(self, EndpointError::Transient(_))
    }
}

/// A chat-completion backend; must be shareable across worker threads.
pub trait ChatEndpoint: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError>;
}

/// OpenAI-compatible `POST {base_url}/chat/completions`.
pub struct HttpChatEndpoint {
    id: String,
    url: String,
    api_key_env: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatEndpoint {
    pub fn new(cfg: &EndpointConfig) -> Self {
        let client =
            reqwest::blocking::Client::builder().timeout(Duration::from_secs(120)).build().expect("http client");
        Self {
            id: cfg.endpoint_id().to_string(),
            url: format!("{}/chat/completions", cfg.base_url.trim_end_matches('/')),
            api_key_env: cfg.api_key_env.clone(),
            client,
        }
    }
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<CompletionChoice>,
}

#[derive(Deserialize)]
struct CompletionChoice {
    message: CompletionMessage,
}

#[derive(Deserialize)]
struct CompletionMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatEndpoint for HttpChatEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        let mut builder = self.client.post(&self.url).json(req);
        if let Some(key) = self.api_key_env.as_deref().and_then(|v| std::env::var(v).ok()) {
            builder = builder.bearer_auth(key);
        }
        let resp = builder.send().map_err(|e| EndpointError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| EndpointError::Transient(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(match crate::mtclient::status_error(status, &body) {
                crate::mtclient::ProviderError::Transient(m) => EndpointError::Transient(m),
                crate::mtclient::ProviderError::Permanent(m) => EndpointError::Permanent(m),
            });
        }
        let parsed: CompletionResponse =
            serde_json::from_str(&body).map_err(|e| EndpointError::Permanent(format!("bad completion body: {e}")))?;
        Ok(parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub passage_id: String,
    pub book_id: String,
    pub lang: Lang,
    pub task: TaskKind,
    pub perturbation: Perturbation,
    pub endpoint: String,
    pub prompt_fingerprint: String,
    pub raw_response: String,
    pub status: ResultStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub latency_ms: u64,
    pub attempts: u32,
    pub timestamp_ms: u64,
}

/// Resume key: a cell is done once a row with this key exists.
pub type ResultKey = (String, Lang, TaskKind, Perturbation, String, String);

impl ProbeResult {
    pub fn key(&self) -> ResultKey {
        (
            self.passage_id.clone(),
            self.lang.clone(),
            self.task,
            self.perturbation,
            self.endpoint.clone(),
            self.prompt_fingerprint.clone(),
        )
    }
}

/// Sorts results by key so exports do not depend on completion order.
pub fn sort_results(rows: &mut [ProbeResult]) {
    rows.sort_by_key(|a| a.key());
}

/// Reads a result JSONL file. A torn final line left by an interrupted
/// writer is ignored.
pub fn read_results(path: &Path) -> std::io::Result<Vec<ProbeResult>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e),
    };
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(r) => rows.push(r),
            Err(e) => log::warn!("skipping unreadable result row: {e}"),
        }
    }
    Ok(rows)
}

/// Append-only JSONL result sink. Writes from concurrent workers are
/// serialized; each row is flushed before it counts as done.
pub struct JsonlSink {
    writer: Mutex<Box<dyn Write + Send>>,
    done: Mutex<HashSet<ResultKey>>,
}

impl JsonlSink {
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let existing = read_results(path)?;
        let mut file = OpenOptions::new().create(true).append(true).read(true).open(path)?;
        // make sure a torn last line does not glue onto the next row
        let len = file.metadata()?.len();
        if len > 0 {
            use std::io::{Read, Seek, SeekFrom};
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        Ok(Self::from_writer(Box::new(file), existing.iter().map(ProbeResult::key)))
    }

    pub fn from_writer(writer: Box<dyn Write + Send>, done: impl IntoIterator<Item = ResultKey>) -> Self {
        Self { writer: Mutex::new(writer), done: Mutex::new(done.into_iter().collect()) }
    }

    pub fn contains(&self, key: &ResultKey) -> bool {
        self.done.lock().unwrap().contains(key)
    }

    pub fn len(&self) -> usize {
        self.done.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn append(&self, row: &ProbeResult) -> std::io::Result<()> {
        let mut line = serde_json::to_string(row).map_err(std::io::Error::other)?;
        line.push('\n');
        let mut w = self.writer.lock().unwrap();
        w.write_all(line.as_bytes())?;
        w.flush()?;
        self.done.lock().unwrap().insert(row.key());
        Ok(())
    }
}

/// A configured endpoint together with its client.
#[derive(Clone)]
pub struct EndpointSpec {
    pub config: EndpointConfig,
    pub client: Arc<dyn ChatEndpoint>,
}

impl EndpointSpec {
    pub fn http(config: EndpointConfig) -> Self {
        let client = Arc::new(HttpChatEndpoint::new(&config));
        Self { config, client }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Restrict to these languages; all passage languages otherwise.
    pub langs: Option<Vec<Lang>>,
    pub prefix_split: PrefixSplit,
    /// Set to stop issuing new requests; in-flight ones still complete.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointTally {
    pub ok: usize,
    pub error: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planned: usize,
    pub skipped_existing: usize,
    pub issued: usize,
    pub ok: usize,
    pub errors: usize,
    pub per_endpoint: BTreeMap<String, EndpointTally>,
    /// Endpoints whose every request this run failed.
    pub failing_endpoints: Vec<String>,
    pub interrupted: bool,
}

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("result sink write failed after {} rows: {source}", summary.issued)]
    Sink { source: std::io::Error, summary: RunSummary },
}

struct Job<'a> {
    passage: &'a Passage,
    lang: &'a str,
    task: ProbeTask,
    prompt: Prompt,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Issues every (passage, language, task, endpoint) request not already in
/// `sink`. Failures after retries are written as error rows.
pub fn run_suite(
    dataset: &[Passage],
    tasks: &[ProbeTask],
    endpoints: &[EndpointSpec],
    sink: &JsonlSink,
    opts: &SuiteOptions,
) -> Result<RunSummary, SuiteError> {
    for ep in endpoints {
        ep.config.validate()?;
    }
    let mut passages: Vec<&Passage> = dataset.iter().collect();
    passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));

    let mut cells: Vec<Job> = Vec::new();
    for p in passages {
        for lang in p.langs() {
            if opts.langs.as_ref().is_some_and(|ls| !ls.iter().any(|l| l == lang)) {
                continue;
            }
            for task in tasks.iter().filter(|t| t.applies_to(p)) {
                let prompt = build_prompt(task, p, lang, opts.prefix_split)?;
                cells.push(Job { passage: p, lang, task: *task, prompt });
            }
        }
    }

    let mut summary = RunSummary::default();
    let mut queues: Vec<Vec<&Job>> = vec![Vec::new(); endpoints.len()];
    for (e, ep) in endpoints.iter().enumerate() {
        let id = ep.config.endpoint_id();
        summary.per_endpoint.insert(id.to_string(), EndpointTally::default());
        for job in &cells {
            summary.planned += 1;
            let key = (
                job.passage.passage_id.clone(),
                job.lang.to_string(),
                job.task.kind,
                job.task.perturbation,
                id.to_string(),
                job.prompt.fingerprint.clone(),
            );
            if sink.contains(&key) {
                summary.skipped_existing += 1;
            } else {
                queues[e].push(job);
            }
        }
    }

    let summary = Mutex::new(summary);
    let abort = AtomicBool::new(false);
    let sink_error: Mutex<Option<std::io::Error>> = Mutex::new(None);
    let stop = || abort.load(Ordering::SeqCst) || opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst));

    std::thread::scope(|scope| {
        for (ep, queue) in endpoints.iter().zip(&queues) {
            let next = Arc::new(AtomicUsize::new(0));
            for _ in 0..ep.config.max_in_flight.min(queue.len().max(1)) {
                let next = Arc::clone(&next);
                let (summary, abort, sink_error, stop) = (&summary, &abort, &sink_error, &stop);
                scope.spawn(move || loop {
                    if stop() {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = queue.get(i) else { break };
                    let req = ep.config.request(job.prompt.messages.clone());
                    let started = Instant::now();
                    let (res, attempts) = ep.config.retry.run(|_| ep.client.complete(&req));
                    let (raw, status, error) = match res {
                        Ok(text) => (text, ResultStatus::Ok, None),
                        Err(e) => (String::new(), ResultStatus::Error, Some(e.to_string())),
                    };
                    let row = ProbeResult {
                        passage_id: job.passage.passage_id.clone(),
                        book_id: job.passage.book_id.clone(),
                        lang: job.lang.to_string(),
                        task: job.task.kind,
                        perturbation: job.task.perturbation,
                        endpoint: ep.config.endpoint_id().to_string(),
                        prompt_fingerprint: job.prompt.fingerprint.clone(),
                        raw_response: raw,
                        status,
                        error,
                        latency_ms: started.elapsed().as_millis() as u64,
                        attempts,
                        timestamp_ms: now_ms(),
                    };
                    if let Err(e) = sink.append(&row) {
                        abort.store(true, Ordering::SeqCst);
                        sink_error.lock().unwrap().get_or_insert(e);
                        break;
                    }
                    let mut s = summary.lock().unwrap();
                    s.issued += 1;
                    let tally = s.per_endpoint.get_mut(ep.config.endpoint_id()).unwrap();
                    match status {
                        ResultStatus::Ok => tally.ok += 1,
                        ResultStatus::Error => tally.error += 1,
                    }
                    match status {
                        ResultStatus::Ok => s.ok += 1,
                        ResultStatus::Error => s.errors += 1,
                    }
                });
            }
        }
    });

    let mut summary = summary.into_inner().unwrap();
    summary.failing_endpoints =
        summary.per_endpoint.iter().filter(|(_, t)| t.error > 0 && t.ok == 0).map(|(id, _)| id.clone()).collect();
    summary.interrupted = opts.cancel.as_ref().is_some_and(|c| c.load(Ordering::SeqCst))
        && summary.issued + summary.skipped_existing < summary.planned;
    if let Some(source) = sink_error.into_inner().unwrap() {
        return Err(SuiteError::Sink { source, summary });
    }
    Ok(summary)
}
