//! Independent reference implementations and fixtures shared by the
//! integration tests. The oracles count n-grams by brute force with plain
//! vectors and linear scans, so they share no code path with the library.
#![allow(dead_code)]

pub mod checks;

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use litprobe::corpus::{build_passages, AlignedGroup, BookMeta, Character, CharacterGazetteer, Passage};
use litprobe::probe::{
    build_prompt, passage_variant, split_prefix, ChatEndpoint, ChatRequest, EndpointError, PrefixSplit, ProbeTask,
    TaskKind,
};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

// ---------------------------------------------------------------------------
// metric oracles

fn grams<T: Clone>(items: &[T], n: usize) -> Vec<Vec<T>> {
    if items.len() < n {
        return Vec::new();
    }
    (0..=items.len() - n).map(|i| items[i..i + n].to_vec()).collect()
}

fn occurrences<T: PartialEq>(list: &[Vec<T>], g: &[T]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

/// (clipped matches, hypothesis n-grams, reference n-grams)
fn brute_matches<T: Clone + PartialEq>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let h = grams(hyp, n);
    let r = grams(reference, n);
    let mut seen: Vec<Vec<T>> = Vec::new();
    let mut matches = 0;
    for g in &h {
        if seen.contains(g) {
            continue;
        }
        seen.push(g.clone());
        matches += occurrences(&h, g).min(occurrences(&r, g));
    }
    (matches, h.len(), r.len())
}

pub fn oracle_bleu(hyp: &str, reference: &str, max_order: usize) -> f64 {
    let h: Vec<String> = hyp.split_whitespace().map(String::from).collect();
    let r: Vec<String> = reference.split_whitespace().map(String::from).collect();
    if h.is_empty() {
        return 0.0;
    }
    let mut product = 1.0f64;
    for n in 1..=max_order {
        let (m, total, _) = brute_matches(&h, &r, n);
        let p = if n == 1 { m as f64 / total as f64 } else { (m as f64 + 1.0) / (total as f64 + 1.0) };
        if p == 0.0 {
            return 0.0;
        }
        product *= p;
    }
    let bp = if h.len() >= r.len() { 1.0 } else { (1.0 - r.len() as f64 / h.len() as f64).exp() };
    100.0 * bp * product.powf(1.0 / max_order as f64)
}

pub fn oracle_chrf(hyp: &str, reference: &str, char_order: usize, word_order: usize, beta: f64) -> f64 {
    let hc: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let rc: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hw: Vec<String> = hyp.split_whitespace().map(String::from).collect();
    let rw: Vec<String> = reference.split_whitespace().map(String::from).collect();
    let mut stats = Vec::new();
    for n in 1..=char_order {
        stats.push(brute_matches(&hc, &rc, n));
    }
    for n in 1..=word_order {
        stats.push(brute_matches(&hw, &rw, n));
    }
    let used: Vec<_> = stats.into_iter().filter(|&(_, h, r)| h > 0 || r > 0).collect();
    if used.is_empty() {
        return 100.0;
    }
    let k = used.len() as f64;
    let p: f64 = used.iter().map(|&(m, h, _)| if h == 0 { 0.0 } else { m as f64 / h as f64 }).sum::<f64>() / k;
    let r: f64 = used.iter().map(|&(m, _, r)| if r == 0 { 0.0 } else { m as f64 / r as f64 }).sum::<f64>() / k;
    if p + r == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    100.0 * (1.0 + b2) * p * r / (b2 * p + r)
}

/// Full (m+1)×(n+1) Wagner-Fischer table.
pub fn oracle_levenshtein(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    let longest = a.len().max(b.len());
    if longest == 0 {
        1.0
    } else {
        1.0 - d[a.len()][b.len()] as f64 / longest as f64
    }
}

/// Random text over a small alphabet so n-grams collide often.
pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["the", "cat", "sat", "a", "ab", "ba", "é", "naïve", "猫", "on", "mat", "The", "cat,"];
    let len = rng.random_range(0..18);
    let mut words: Vec<String> = (0..len).map(|_| WORDS.choose(rng).unwrap().to_string()).collect();
    if rng.random_bool(0.2) {
        words.push("  ".into());
    }
    words.join(if rng.random_bool(0.1) { "  " } else { " " })
}

/// Random short string over a 4-letter alphabet plus a multibyte char.
pub fn random_chars(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'ñ', ' '];
    let len = rng.random_range(0..14);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// monotone matching oracle

/// Every strictly increasing matching using only positive cells.
pub fn all_monotone_matchings(sim: &[Vec<f64>]) -> Vec<Vec<(usize, usize)>> {
    fn go(sim: &[Vec<f64>], i: usize, min_j: usize, cur: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        if i == sim.len() {
            out.push(cur.clone());
            return;
        }
        go(sim, i + 1, min_j, cur, out);
        for j in min_j..sim[i].len() {
            if sim[i][j] > 0.0 {
                cur.push((i, j));
                go(sim, i + 1, j + 1, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(sim, 0, 0, &mut Vec::new(), &mut out);
    out
}

pub fn objective(sim: &[Vec<f64>], pairs: &[(usize, usize)], penalty: f64) -> f64 {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    pairs.iter().map(|&(i, j)| sim[i][j]).sum::<f64>() - penalty * (rows + cols - 2 * pairs.len()) as f64
}

// ---------------------------------------------------------------------------
// synthetic library

pub const ROSTER: [&str; 25] = [
    "Aldric",
    "Brenna",
    "Cassius",
    "Delphine",
    "Edmund",
    "Fenella",
    "Gideon",
    "Honora",
    "Ignatius",
    "Juniper",
    "Kestrel",
    "Lysander",
    "Marisol",
    "Nathaniel",
    "Ottoline",
    "Percival",
    "Quentin",
    "Rosalind",
    "Silas",
    "Tamsin",
    "Ulric",
    "Verity",
    "Wilhelmina",
    "Xavier",
    "Yolanda",
];

const TITLES: [(&str, &str, &str); 5] = [
    ("glass-orchard", "The Glass Orchard", "Maren Holloway"),
    ("salt-cathedral", "A Cathedral of Salt", "Idris Penhallow"),
    ("winter-ledger", "The Winter Ledger", "Constance Abernethy"),
    ("lantern-road", "Lantern Road", "Teodor Vasquez-Lind"),
    ("paper-moons", "Seven Paper Moons", "Agatha Rennick"),
];

/// Titles and authors the random endpoint draws from; none resembles a
/// fixture book.
pub const FAKE_BOOKS: [(&str, &str); 4] = [
    ("Harbor of Unlit Lamps", "Quill Marchetti"),
    ("Notes from a Copper Tower", "Bertil Oyelaran"),
    ("Whistling in the Archive", "Sunniva Kask"),
    ("An Almanac of Small Storms", "Rufus Ekwueme"),
];

const EN_WORDS: &[&str] = &[
    "river",
    "lamp",
    "quietly",
    "window",
    "morning",
    "letter",
    "garden",
    "stone",
    "bridge",
    "candle",
    "harbor",
    "walked",
    "watched",
    "remembered",
    "silver",
    "under",
    "across",
    "toward",
    "beneath",
    "slowly",
    "bread",
    "salt",
    "orchard",
    "ledger",
    "road",
    "moon",
    "paper",
    "glass",
    "winter",
    "cold",
    "warm",
    "door",
    "voice",
    "hand",
];

const ES_WORDS: &[&str] = &[
    "río", "lámpara", "despacio", "ventana", "mañana", "carta", "jardín", "piedra", "puente", "vela", "puerto",
    "caminó", "miró", "recordó", "plata", "bajo", "través", "hacia", "debajo", "lento", "pan", "sal", "huerto",
    "libro", "camino", "luna", "papel", "vidrio", "invierno", "frío", "tibio", "puerta", "voz", "mano",
];

pub struct Library {
    pub books: BTreeMap<String, BookMeta>,
    pub gazetteer: CharacterGazetteer,
    pub passages: Vec<Passage>,
}

fn sentence(rng: &mut ChaCha8Rng, vocab: &[&str], words: usize, name: Option<&str>) -> String {
    let mut out: Vec<String> = (0..words).map(|_| vocab.choose(rng).unwrap().to_string()).collect();
    if let Some(name) = name {
        let at = rng.random_range(0..out.len());
        out[at] = name.to_string();
        let again = rng.random_range(0..out.len());
        if again != at && rng.random_bool(0.3) {
            out[again] = name.to_string();
        }
    }
    out.join(" ")
}

/// Five books with five characters each (25 names) and 20 passages per book
/// in English and Spanish: 16 naming exactly one character, 4 naming none.
pub fn library() -> Library {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut books = BTreeMap::new();
    let mut gazetteer = CharacterGazetteer::default();
    let mut passages = Vec::new();
    for (b, (id, title, author)) in TITLES.iter().enumerate() {
        books.insert(
            id.to_string(),
            BookMeta {
                book_id: id.to_string(),
                author: author.to_string(),
                titles: BTreeMap::from([("en".into(), vec![title.to_string()])]),
                pub_years: BTreeMap::new(),
                copyrighted: false,
            },
        );
        let names = &ROSTER[b * 5..b * 5 + 5];
        gazetteer.books.insert(
            id.to_string(),
            names
                .iter()
                .map(|n| Character {
                    name: n.to_string(),
                    aliases: BTreeMap::from([("en".into(), vec![n.to_string()])]),
                })
                .collect(),
        );
        let groups: Vec<AlignedGroup> = (0..20)
            .map(|k| {
                let name = (k % 5 != 4).then(|| names[k % 5]);
                let len = rng.random_range(45..70);
                AlignedGroup {
                    book_id: id.to_string(),
                    texts: BTreeMap::from([
                        ("en".into(), sentence(&mut rng, EN_WORDS, len, name)),
                        ("es".into(), sentence(&mut rng, ES_WORDS, len, name)),
                    ]),
                }
            })
            .collect();
        let sets = build_passages(&groups, &gazetteer).unwrap();
        assert!(sets.discarded.is_empty());
        passages.extend(sets.one_name);
        passages.extend(sets.no_name);
    }
    passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    Library { books, gazetteer, passages }
}

// ---------------------------------------------------------------------------
// mock endpoints

fn prompt_key(req: &ChatRequest) -> String {
    req.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\u{1e}")
}

/// Answers every prompt it was built for with the gold answer.
pub struct MemorizingEndpoint {
    answers: HashMap<String, String>,
}

impl MemorizingEndpoint {
    pub fn new(lib: &Library, tasks: &[ProbeTask], split: PrefixSplit) -> Self {
        let mut answers = HashMap::new();
        for p in &lib.passages {
            let book = &lib.books[&p.book_id];
            for lang in p.langs() {
                for task in tasks.iter().filter(|t| t.applies_to(p)) {
                    let prompt = build_prompt(task, p, lang, split).unwrap();
                    let answer = match task.kind {
                        TaskKind::DirectProbe => {
                            format!("{{\"title\": \"{}\", \"author\": \"{}\"}}", book.canonical_title(), book.author)
                        }
                        TaskKind::NameCloze => p.gold_name.clone().unwrap(),
                        TaskKind::PrefixProbe => {
                            let text = passage_variant(p, lang, task.perturbation).unwrap();
                            split_prefix(&text, split).1
                        }
                    };
                    let content = prompt.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\u{1e}");
                    answers.insert(content, answer);
                }
            }
        }
        Self { answers }
    }
}

impl ChatEndpoint for MemorizingEndpoint {
    fn id(&self) -> &str {
        "memorizer"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        self.answers
            .get(&prompt_key(req))
            .cloned()
            .ok_or_else(|| EndpointError::Permanent("prompt not in lookup table".into()))
    }
}

/// Guesses uniformly: fake books for direct probing, a roster name for
/// cloze, and random words for continuation. The draw is seeded by the
/// prompt so reruns agree.
pub struct RandomEndpoint;

impl ChatEndpoint for RandomEndpoint {
    fn id(&self) -> &str {
        "random"
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        let digest = Sha256::digest(prompt_key(req).as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().unwrap()));
        let content = &req.messages.last().unwrap().content;
        Ok(if content.contains("\"title\"") {
            let (t, a) = FAKE_BOOKS.choose(&mut rng).unwrap();
            format!("{{\"title\": \"{t}\", \"author\": \"{a}\"}}")
        } else if content.contains("[MASK]") {
            ROSTER.choose(&mut rng).unwrap().to_string()
        } else {
            sentence(&mut rng, EN_WORDS, 30, None)
        })
    }
}

/// Counts calls per prompt and raises `cancel` once `stop_after` calls
/// have been made.
pub struct CountingEndpoint<E> {
    pub inner: E,
    pub calls: Mutex<HashMap<String, usize>>,
    pub total: AtomicUsize,
    pub stop_after: Option<usize>,
    pub cancel: Arc<AtomicBool>,
}

impl<E> CountingEndpoint<E> {
    pub fn new(inner: E, stop_after: Option<usize>, cancel: Arc<AtomicBool>) -> Self {
        Self { inner, calls: Mutex::new(HashMap::new()), total: AtomicUsize::new(0), stop_after, cancel }
    }
}

impl<E: ChatEndpoint> ChatEndpoint for CountingEndpoint<E> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &ChatRequest) -> Result<String, EndpointError> {
        *self.calls.lock().unwrap().entry(prompt_key(req)).or_default() += 1;
        let n = self.total.fetch_add(1, Ordering::SeqCst) + 1;
        if self.stop_after.is_some_and(|s| n >= s) {
            self.cancel.store(true, Ordering::SeqCst);
        }
        self.inner.complete(req)
    }
}

// ---------------------------------------------------------------------------
// frozen scoring fixture

pub const FIXTURE_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/scoring");

pub struct Intended {
    pub key: (String, String, String, String, String),
    pub label: String,
}

/// Scores the frozen raw results and returns the records, their JSONL
/// serialization and the hand-assigned intended labels.
pub fn score_fixture() -> (Vec<litprobe::ScoreRecord>, String, Vec<Intended>) {
    use litprobe::corpus::CorpusConfig;
    use litprobe::metrics::MetricConfig;
    use litprobe::probe::ProbeResult;
    use litprobe::scoring::{to_jsonl, ScoreConfig, ScoringContext};

    let dir = std::path::Path::new(FIXTURE_DIR);
    let corpus = CorpusConfig::load(&dir.join("corpus.toml")).unwrap();
    let dataset: Vec<Passage> = litprobe::jsonl::read(&dir.join("dataset.jsonl")).unwrap();
    let raw: Vec<ProbeResult> = litprobe::jsonl::read(&dir.join("raw.jsonl")).unwrap();
    let books = corpus.metas();
    let gazetteer = corpus.gazetteer();
    let (cfg, metric) = (ScoreConfig::default(), MetricConfig::default());
    let records = ScoringContext::new(&dataset, &books, &gazetteer, &cfg, &metric).score_all(&raw);
    let jsonl = to_jsonl(&records);

    let intended = std::fs::read_to_string(dir.join("intended.tsv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            Intended { key: (f[0].into(), f[1].into(), f[2].into(), f[3].into(), f[4].into()), label: f[5].into() }
        })
        .collect();
    (records, jsonl, intended)
}

/// Label a record would carry in the intended file.
pub fn observed_label(r: &litprobe::ScoreRecord) -> String {
    if r.task == TaskKind::PrefixProbe {
        return "chrf".into();
    }
    match (r.correct, r.error_class) {
        (Some(true), _) => "correct".into(),
        (_, Some(c)) => c.as_str().into(),
        _ => "unlabelled".into(),
    }
}

/// Compares records against the intended labels and the frozen expected
/// output; returns human-readable mismatches.
pub fn fixture_mismatches() -> Vec<String> {
    let (records, jsonl, intended) = score_fixture();
    let mut out = Vec::new();
    let mut by_key: HashMap<(String, String, String, String, String), Vec<String>> = HashMap::new();
    for r in &records {
        let key = (
            r.passage_id.clone(),
            r.lang.clone(),
            r.task.as_str().to_string(),
            r.perturbation.as_str().to_string(),
            r.endpoint.clone(),
        );
        by_key.entry(key).or_default().push(observed_label(r));
    }
    if records.len() != intended.len() {
        out.push(format!("{} scored rows, {} intended", records.len(), intended.len()));
    }
    let mut wanted: HashMap<_, Vec<String>> = HashMap::new();
    for i in &intended {
        wanted.entry(i.key.clone()).or_default().push(i.label.clone());
    }
    for (key, mut labels) in wanted {
        let mut got = by_key.remove(&key).unwrap_or_default();
        labels.sort();
        got.sort();
        if labels != got {
            out.push(format!("{key:?}: intended {labels:?}, scored {got:?}"));
        }
    }
    let path = std::path::Path::new(FIXTURE_DIR).join("expected_scores.jsonl");
    if std::env::var_os("LITPROBE_BLESS").is_some() {
        std::fs::write(&path, &jsonl).unwrap();
    }
    match std::fs::read_to_string(&path) {
        Ok(expected) if expected == jsonl => {}
        Ok(_) => out.push("scored output differs from expected_scores.jsonl".into()),
        Err(e) => out.push(format!("{}: {e}", path.display())),
    }
    out
}
