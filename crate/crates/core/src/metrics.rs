//! Text normalization and the similarity metrics used across the pipeline:
//! Levenshtein similarity, add-one smoothed sentence BLEU and ChrF++.
//!
//! Every function here is pure. Scores are on a 0..=100 scale except
//! [`levenshtein_similarity`], which returns a ratio in `[0, 1]`.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

/// N-gram orders and the recall weight used by BLEU and ChrF++.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    pub bleu_max_order: usize,
    pub chrf_char_order: usize,
    pub chrf_word_order: usize,
    pub chrf_beta: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { bleu_max_order: 4, chrf_char_order: 6, chrf_word_order: 2, chrf_beta: 2.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.bleu_max_order == 0 || self.chrf_char_order == 0 || self.chrf_word_order == 0 {
            return Err("metric n-gram orders must be >= 1".into());
        }
        if self.chrf_beta.is_nan() || self.chrf_beta <= 0.0 {
            return Err("chrf_beta must be positive".into());
        }
        Ok(())
    }
}

/// Folds diacritics and other non-ASCII letters to their closest ASCII
/// transliteration, lowercases, strips punctuation hanging off either end of
/// each whitespace token and collapses whitespace.
///
/// ```
/// use litprobe::metrics::normalize_text;
/// assert_eq!(normalize_text("  Mr. Darcy! "), "mr darcy");
/// assert_eq!(normalize_text("Aşk Ve Gurur"), "ask ve gurur");
/// ```
pub fn normalize_text(s: &str) -> String {
    let folded = deunicode::deunicode(s).to_lowercase();
    let mut out = String::with_capacity(folded.len());
    for token in folded.split_whitespace() {
        let token = token.trim_matches(|c: char| !c.is_alphanumeric());
        if token.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    // two-row DP, columns over `b`
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn levenshtein_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

fn ngram_counts<T: Hash + Eq + Clone>(items: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || items.len() < n {
        return counts;
    }
    for window in items.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and total hypothesis n-grams of order `n`.
fn clipped_matches<T: Hash + Eq + Clone>(hyp: &[T], reference: &[T], n: usize) -> (usize, usize, usize) {
    let hyp_counts = ngram_counts(hyp, n);
    let ref_counts = ngram_counts(reference, n);
    let matches = hyp_counts.iter().map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0))).sum();
    let hyp_total = hyp.len().saturating_sub(n - 1).min(hyp.len());
    let ref_total = reference.len().saturating_sub(n - 1).min(reference.len());
    (matches, hyp_total, ref_total)
}

/// Sentence BLEU over whitespace tokens with add-one smoothing on the
/// precisions of order 2 and above. Unigram precision is left unsmoothed, so
/// a hypothesis sharing no token with the reference scores 0.
pub fn smoothed_bleu(hypothesis: &str, reference: &str, cfg: &MetricConfig) -> f64 {
    let hyp: Vec<&str> = hypothesis.split_whitespace().collect();
    let reference: Vec<&str> = reference.split_whitespace().collect();
    if hyp.is_empty() {
        return 0.0;
    }
    let order = cfg.bleu_max_order.max(1);
    let mut log_sum = 0.0;
    for n in 1..=order {
        let (matches, total, _) = clipped_matches(&hyp, &reference, n);
        let precision = if n == 1 {
            if matches == 0 {
                return 0.0;
            }
            matches as f64 / total as f64
        } else {
            (matches as f64 + 1.0) / (total as f64 + 1.0)
        };
        log_sum += precision.ln() / order as f64;
    }
    let brevity = (1.0 - reference.len() as f64 / hyp.len() as f64).exp().min(1.0);
    (100.0 * brevity * log_sum.exp()).clamp(0.0, 100.0)
}

/// ChrF++: character n-grams (whitespace removed) of orders
/// `1..=chrf_char_order` plus word n-grams of orders `1..=chrf_word_order`.
/// Precision and recall are averaged over every order that has n-grams on
/// at least one side, then combined into an F-beta score.
pub fn chrf_pp(hypothesis: &str, reference: &str, cfg: &MetricConfig) -> f64 {
    let hyp_chars: Vec<char> = hypothesis.chars().filter(|c| !c.is_whitespace()).collect();
    let ref_chars: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    let hyp_words: Vec<&str> = hypothesis.split_whitespace().collect();
    let ref_words: Vec<&str> = reference.split_whitespace().collect();

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut orders = 0usize;
    let mut accumulate = |(matches, hyp_total, ref_total): (usize, usize, usize)| {
        if hyp_total == 0 && ref_total == 0 {
            return;
        }
        orders += 1;
        if hyp_total > 0 {
            precision_sum += matches as f64 / hyp_total as f64;
        }
        if ref_total > 0 {
            recall_sum += matches as f64 / ref_total as f64;
        }
    };
    for n in 1..=cfg.chrf_char_order {
        accumulate(clipped_matches(&hyp_chars, &ref_chars, n));
    }
    for n in 1..=cfg.chrf_word_order {
        accumulate(clipped_matches(&hyp_words, &ref_words, n));
    }
    if orders == 0 {
        // both sides empty
        return 100.0;
    }
    let precision = precision_sum / orders as f64;
    let recall = recall_sum / orders as f64;
    if precision + recall == 0.0 {
        return 0.0;
    }
    let beta2 = cfg.chrf_beta * cfg.chrf_beta;
    let f = (1.0 + beta2) * precision * recall / (beta2 * precision + recall);
    (100.0 * f).clamp(0.0, 100.0)
}
