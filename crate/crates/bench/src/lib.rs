//! Synthetic inputs shared by the benches.

use litprobe::corpus::Paragraph;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &[
    "the", "of", "and", "to", "a", "in", "was", "he", "she", "it", "that", "his", "her", "had", "with", "for", "on",
    "at", "not", "but", "river", "house", "night", "letter", "window", "road", "garden", "door", "voice", "hand",
];

pub fn sentence(rng: &mut ChaCha8Rng, words: usize) -> String {
    (0..words).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

/// `n` English paragraphs and a noisy pivot of the same text with every
/// tenth paragraph missing.
pub fn paragraph_pair(n: usize, seed: u64) -> (Vec<Paragraph>, Vec<Paragraph>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let en: Vec<String> = (0..n)
        .map(|_| {
            let len = rng.random_range(30..90);
            sentence(&mut rng, len)
        })
        .collect();
    let pivot: Vec<String> = en
        .iter()
        .enumerate()
        .filter(|(i, _)| i % 10 != 9)
        .map(|(_, t)| {
            t.split(' ')
                .map(|w| if rng.random_bool(0.15) { *VOCAB.choose(&mut rng).unwrap() } else { w })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    (paragraphs("en", en), paragraphs("xx", pivot))
}

fn paragraphs(lang: &str, texts: Vec<String>) -> Vec<Paragraph> {
    texts
        .into_iter()
        .enumerate()
        .map(|(seq, text)| Paragraph { book_id: "bench".into(), lang: lang.into(), seq, text, sentence_ids: vec![] })
        .collect()
}
