//! Pivot-based paragraph alignment.
//!
//! Each target-language paragraph is machine-translated to English (the
//! pivot), scored against every English paragraph with smoothed BLEU, and a
//! monotone 1:1 matching is picked by dynamic programming. Pairs then go
//! through the length and BLEU filters before human review.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{AlignedGroup, Lang, Paragraph, ENGLISH};
use crate::metrics::{smoothed_bleu, MetricConfig};

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("cannot align an empty paragraph list")]
    EmptyInput,
    #[error("pivot has {pivot} paragraphs but the target has {target}")]
    PivotMismatch { pivot: usize, target: usize },
    #[error("invalid alignment config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Kept,
    DroppedLength,
    DroppedBleu,
    PendingReview,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentCandidate {
    pub en_seq: usize,
    pub tgt_seq: usize,
    pub lang: Lang,
    pub pivot_text: String,
    pub bleu: f64,
    pub en_chars: usize,
    pub tgt_chars: usize,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub bleu_threshold: f64,
    pub length_ratio: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { bleu_threshold: 5.0, length_ratio: 3.0 }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.bleu_threshold.is_nan() || self.bleu_threshold < 0.0 {
            return Err(AlignError::Config("bleu_threshold must be >= 0".into()));
        }
        if self.length_ratio.is_nan() || self.length_ratio <= 1.0 {
            return Err(AlignError::Config("length_ratio must be > 1".into()));
        }
        Ok(())
    }
}

/// Everything the `align` command reads from its config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignConfig {
    pub skip_penalty: f64,
    pub filter: FilterConfig,
    pub metric: MetricConfig,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self { skip_penalty: 1.0, filter: FilterConfig::default(), metric: MetricConfig::default() }
    }
}

/// `sim[i][j]` is the BLEU of pivot paragraph `j` against English paragraph `i`.
pub fn similarity_matrix(
    en_paras: &[Paragraph],
    pivot_paras: &[Paragraph],
    cfg: &MetricConfig,
) -> Result<Vec<Vec<f64>>, AlignError> {
    if en_paras.is_empty() || pivot_paras.is_empty() {
        return Err(AlignError::EmptyInput);
    }
    Ok(en_paras
        .par_iter()
        .map(|en| pivot_paras.iter().map(|pv| smoothed_bleu(&pv.text, &en.text, cfg)).collect())
        .collect())
}

#[derive(Clone, Copy, PartialEq)]
enum Move {
    Start,
    Match,
    SkipRow,
    SkipCol,
}

/// Monotone 1:1 matching maximizing the summed similarity of matched pairs
/// minus `skip_penalty` for every unmatched row and column. Cells with zero
/// similarity cannot be matched. Ties prefer match, then skipping a row.
pub fn align_monotone(sim: &[Vec<f64>], skip_penalty: f64) -> Vec<(usize, usize)> {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    let mut score = vec![vec![0.0f64; cols + 1]; rows + 1];
    let mut back = vec![vec![Move::Start; cols + 1]; rows + 1];
    for i in 1..=rows {
        score[i][0] = score[i - 1][0] - skip_penalty;
        back[i][0] = Move::SkipRow;
    }
    for j in 1..=cols {
        score[0][j] = score[0][j - 1] - skip_penalty;
        back[0][j] = Move::SkipCol;
    }
    for i in 1..=rows {
        for j in 1..=cols {
            let mut best = score[i - 1][j] - skip_penalty;
            let mut mv = Move::SkipRow;
            let s = sim[i - 1][j - 1];
            if s > 0.0 && score[i - 1][j - 1] + s >= best {
                best = score[i - 1][j - 1] + s;
                mv = Move::Match;
            }
            let col = score[i][j - 1] - skip_penalty;
            if col > best {
                best = col;
                mv = Move::SkipCol;
            }
            score[i][j] = best;
            back[i][j] = mv;
        }
    }
    let mut pairs = Vec::new();
    let (mut i, mut j) = (rows, cols);
    while i > 0 || j > 0 {
        match back[i][j] {
            Move::Match => {
                pairs.push((i - 1, j - 1));
                i -= 1;
                j -= 1;
            }
            Move::SkipRow => i -= 1,
            Move::SkipCol => j -= 1,
            Move::Start => break,
        }
    }
    pairs.reverse();
    pairs
}

/// Objective value of a matching under [`align_monotone`]'s scoring.
pub fn matching_score(sim: &[Vec<f64>], pairs: &[(usize, usize)], skip_penalty: f64) -> f64 {
    let rows = sim.len();
    let cols = sim.first().map_or(0, Vec::len);
    let gain: f64 = pairs.iter().map(|&(i, j)| sim[i][j]).sum();
    let skips = (rows - pairs.len()) + (cols - pairs.len());
    gain - skip_penalty * skips as f64
}

/// Sets each candidate's verdict from its lengths and BLEU score. Candidates
/// already accepted by review stay `Kept` if they still pass.
pub fn apply_filters(cands: Vec<AlignmentCandidate>, cfg: &FilterConfig) -> Vec<AlignmentCandidate> {
    cands
        .into_iter()
        .map(|mut c| {
            c.verdict = if c.en_chars as f64 > cfg.length_ratio * c.tgt_chars as f64 {
                Verdict::DroppedLength
            } else if c.bleu < cfg.bleu_threshold {
                Verdict::DroppedBleu
            } else if c.verdict == Verdict::Kept {
                Verdict::Kept
            } else {
                Verdict::PendingReview
            };
            c
        })
        .collect()
}

/// Aligns one translation against the English original. `pivot[j]` must be
/// the English machine translation of `target[j]`.
pub fn align_translation(
    en: &[Paragraph],
    target: &[Paragraph],
    pivot: &[Paragraph],
    cfg: &AlignConfig,
) -> Result<Vec<AlignmentCandidate>, AlignError> {
    if pivot.len() != target.len() {
        return Err(AlignError::PivotMismatch { pivot: pivot.len(), target: target.len() });
    }
    cfg.filter.validate()?;
    let sim = similarity_matrix(en, pivot, &cfg.metric)?;
    let cands = align_monotone(&sim, cfg.skip_penalty)
        .into_iter()
        .map(|(i, j)| AlignmentCandidate {
            en_seq: en[i].seq,
            tgt_seq: target[j].seq,
            lang: target[j].lang.clone(),
            pivot_text: pivot[j].text.clone(),
            bleu: sim[i][j],
            en_chars: en[i].text.chars().count(),
            tgt_chars: target[j].text.chars().count(),
            verdict: Verdict::PendingReview,
        })
        .collect();
    Ok(apply_filters(cands, &cfg.filter))
}

/// Joins per-language alignments into groups covering every language.
/// English paragraphs without a surviving pair in some language are left out.
pub fn group_alignments(
    book_id: &str,
    en: &[Paragraph],
    translations: &BTreeMap<Lang, (Vec<Paragraph>, Vec<AlignmentCandidate>)>,
) -> Vec<AlignedGroup> {
    let survivors = |v: Verdict| matches!(v, Verdict::Kept | Verdict::PendingReview);
    // per language: paragraphs by seq, and surviving en_seq -> tgt_seq
    type Lookup<'a> = (BTreeMap<usize, &'a Paragraph>, BTreeMap<usize, usize>);
    let lookups: BTreeMap<&Lang, Lookup> = translations
        .iter()
        .map(|(lang, (paras, cands))| {
            let by_seq = paras.iter().map(|p| (p.seq, p)).collect();
            let pairs = cands.iter().filter(|c| survivors(c.verdict)).map(|c| (c.en_seq, c.tgt_seq)).collect();
            (lang, (by_seq, pairs))
        })
        .collect();
    en.iter()
        .filter_map(|p| {
            let mut texts = BTreeMap::from([(ENGLISH.to_string(), p.text.clone())]);
            for (lang, (by_seq, pairs)) in &lookups {
                let tgt = pairs.get(&p.seq).and_then(|s| by_seq.get(s))?;
                texts.insert((*lang).clone(), tgt.text.clone());
            }
            Some(AlignedGroup { book_id: book_id.to_string(), texts })
        })
        .collect()
}
