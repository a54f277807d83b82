//! Token-count filtering and per-book stratified sampling.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Passage;

#[derive(Debug, Clone)]
enum Counter {
    Whitespace,
    /// Greedy longest-match segmentation of each whitespace word against a
    /// vocabulary; characters outside the vocabulary count one token each.
    Subword {
        vocab: Arc<HashSet<String>>,
        max_len: usize,
    },
}

/// A named token counter. Counts are additive over whitespace-joined text,
/// so `count("")` is 0 and appending a non-empty word never lowers a count.
#[derive(Debug, Clone)]
pub struct TokenizerHandle {
    pub name: String,
    counter: Counter,
}

impl TokenizerHandle {
    pub fn whitespace() -> Self {
        Self { name: "whitespace".into(), counter: Counter::Whitespace }
    }

    pub fn subword<I, S>(name: impl Into<String>, vocab: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashSet<String> = vocab.into_iter().map(Into::into).filter(|s| !s.is_empty()).collect();
        let max_len = vocab.iter().map(|v| v.chars().count()).max().unwrap_or(1);
        Self { name: name.into(), counter: Counter::Subword { vocab: Arc::new(vocab), max_len } }
    }

    /// Loads a vocabulary file with one piece per line.
    pub fn load_vocab(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("subword").to_string();
        Ok(Self::subword(name, text.lines().map(|l| l.trim_end_matches('\r').to_string())))
    }

    pub fn count(&self, text: &str) -> usize {
        match &self.counter {
            Counter::Whitespace => text.split_whitespace().count(),
            Counter::Subword { vocab, max_len } => text
                .split_whitespace()
                .map(|word| {
                    let chars: Vec<char> = word.chars().collect();
                    let mut pos = 0;
                    let mut pieces = 0;
                    while pos < chars.len() {
                        let longest = (1..=(*max_len).min(chars.len() - pos))
                            .rev()
                            .find(|&len| vocab.contains(&chars[pos..pos + len].iter().collect::<String>()))
                            .unwrap_or(1);
                        pos += longest;
                        pieces += 1;
                    }
                    pieces
                })
                .sum(),
        }
    }
}

/// Fills `token_counts` with `tok`, unless already counted by it.
pub fn ensure_token_counts(p: &mut Passage, tok: &TokenizerHandle) {
    if p.token_counter != tok.name || p.token_counts.len() != p.texts.len() {
        p.token_counts = p.texts.iter().map(|(l, t)| (l.clone(), tok.count(t))).collect();
        p.token_counter = tok.name.clone();
    }
}

/// Keeps passages whose `lang` text has at least `min_tokens` tokens.
pub fn filter_min_tokens(passages: Vec<Passage>, lang: &str, min_tokens: usize, tok: &TokenizerHandle) -> Vec<Passage> {
    passages
        .into_iter()
        .filter_map(|mut p| {
            ensure_token_counts(&mut p, tok);
            (p.token_counts.get(lang).copied().unwrap_or(0) >= min_tokens).then_some(p)
        })
        .collect()
}

/// Largest-remainder allocation of `cap` slots across strata proportional to
/// their sizes. Equal remainders go to the lexicographically smaller name.
/// When `cap` covers everything each stratum keeps its full size.
pub fn allocate_quotas(sizes: &BTreeMap<String, usize>, cap: usize) -> BTreeMap<String, usize> {
    let total: usize = sizes.values().sum();
    if total <= cap {
        return sizes.clone();
    }
    let mut quotas: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders: Vec<(usize, &String)> = Vec::with_capacity(sizes.len());
    for (name, &size) in sizes {
        let scaled = cap * size;
        quotas.insert(name.clone(), scaled / total);
        remainders.push((scaled % total, name));
    }
    let assigned: usize = quotas.values().sum();
    // BTreeMap iteration is name-ordered and the sort is stable
    remainders.sort_by_key(|r| std::cmp::Reverse(r.0));
    for (_, name) in remainders.into_iter().take(cap - assigned) {
        *quotas.get_mut(name).unwrap() += 1;
    }
    quotas
}

/// Stratum key: the gold character name, or empty for passages without one.
fn stratum(p: &Passage) -> String {
    p.gold_name.clone().unwrap_or_default()
}

/// Samples at most `cap` passages of one book, stratified by gold name.
/// The result is ordered by `passage_id` and depends only on the input set
/// and `seed`.
pub fn stratified_sample(mut passages: Vec<Passage>, cap: usize, seed: u64) -> Vec<Passage> {
    passages.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    if passages.len() <= cap {
        return passages;
    }
    let mut strata: BTreeMap<String, Vec<Passage>> = BTreeMap::new();
    for p in passages {
        strata.entry(stratum(&p)).or_default().push(p);
    }
    let sizes = strata.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let quotas = allocate_quotas(&sizes, cap);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cap);
    for (name, members) in strata {
        let quota = quotas[&name];
        let mut picked = rand::seq::index::sample(&mut rng, members.len(), quota).into_vec();
        picked.sort_unstable();
        let mut members: Vec<Option<Passage>> = members.into_iter().map(Some).collect();
        out.extend(picked.into_iter().map(|i| members[i].take().unwrap()));
    }
    out.sort_by(|a, b| a.passage_id.cmp(&b.passage_id));
    out
}

/// Applies [`stratified_sample`] independently to each book.
pub fn sample_per_book(passages: Vec<Passage>, cap: usize, seed: u64) -> Vec<Passage> {
    let mut books: BTreeMap<String, Vec<Passage>> = BTreeMap::new();
    for p in passages {
        books.entry(p.book_id.clone()).or_default().push(p);
    }
    books.into_values().flat_map(|ps| stratified_sample(ps, cap, seed)).collect()
}
