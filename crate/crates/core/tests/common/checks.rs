//! One function per acceptance criterion. Each returns a short summary on
//! success and the first failure otherwise; the acceptance runner and the
//! regular tests both call them.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use litprobe::align::{
    align_monotone, align_translation, apply_filters, matching_score, AlignConfig, AlignmentCandidate, Verdict,
};
use litprobe::corpus::Paragraph;
use litprobe::metrics::{chrf_pp, levenshtein_similarity, smoothed_bleu, MetricConfig};
use litprobe::mtclient::{qc_translation, HeuristicDetector, QcConfig, QcReason};
use litprobe::perturb::{
    derive_seed, find_alias_matches, mask_character, protect_placeholders, restore_placeholders, shuffle_words,
};
use litprobe::probe::{
    read_results, run_suite, ChatEndpoint, EndpointConfig, EndpointSpec, JsonlSink, PrefixSplit, ProbeTask,
    SuiteOptions, TaskKind,
};
use litprobe::sampler::{filter_min_tokens, TokenizerHandle};
use litprobe::scoring::{ScoreConfig, ScoringContext};
use litprobe::{Passage, ScoreRecord, MASK_TOKEN, PLACEHOLDER};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------------------
// metrics

pub fn metric_oracles() -> Check {
    let start = Instant::now();
    let cfg = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let (h, r) = (random_text(&mut rng), random_text(&mut rng));
        let (got, want) = (smoothed_bleu(&h, &r, &cfg), oracle_bleu(&h, &r, cfg.bleu_max_order));
        ensure((got - want).abs() <= 1e-9, || format!("bleu({h:?}, {r:?}) = {got}, oracle {want}"))?;
        let want = oracle_chrf(&h, &r, cfg.chrf_char_order, cfg.chrf_word_order, cfg.chrf_beta);
        let got = chrf_pp(&h, &r, &cfg);
        ensure((got - want).abs() <= 1e-9, || format!("chrf({h:?}, {r:?}) = {got}, oracle {want}"))?;
    }
    for _ in 0..500 {
        let (a, b) = (random_chars(&mut rng), random_chars(&mut rng));
        let (got, want) = (levenshtein_similarity(&a, &b), oracle_levenshtein(&a, &b));
        ensure(got == want, || format!("levenshtein({a:?}, {b:?}) = {got}, oracle {want}"))?;
    }
    let ks = levenshtein_similarity("kitten", "sitting");
    ensure((ks - (1.0 - 3.0 / 7.0)).abs() < 1e-12, || format!("kitten/sitting = {ks}"))?;
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), || format!("took {took:?}"))?;
    Ok(format!("200 bleu/chrf pairs within 1e-9, 500 levenshtein exact, {took:.2?}"))
}

// ---------------------------------------------------------------------------
// alignment

/// Every shape up to 6x6, many random matrices each: the DP reaches the
/// exhaustive optimum and returns the optimal matching when it is unique.
pub fn dp_matches_exhaustive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut cases = 0;
    for rows in 1..=6 {
        for cols in 1..=6 {
            for _ in 0..40 {
                let sim: Vec<Vec<f64>> = (0..rows)
                    .map(|_| {
                        (0..cols)
                            .map(|_| if rng.random_bool(0.35) { 0.0 } else { rng.random_range(0..400) as f64 / 4.0 })
                            .collect()
                    })
                    .collect();
                let penalty = [0.0, 1.0, 5.0, 30.0][rng.random_range(0..4)];
                let dp = align_monotone(&sim, penalty);
                let got = objective(&sim, &dp, penalty);
                ensure((got - matching_score(&sim, &dp, penalty)).abs() < 1e-9, || "objective disagrees".into())?;
                let all = all_monotone_matchings(&sim);
                let best = all.iter().map(|m| objective(&sim, m, penalty)).fold(f64::NEG_INFINITY, f64::max);
                ensure((got - best).abs() < 1e-9, || format!("{sim:?} p={penalty}: dp {got}, best {best}"))?;
                let optimal: Vec<_> =
                    all.iter().filter(|m| (objective(&sim, m, penalty) - best).abs() < 1e-9).collect();
                if optimal.len() == 1 {
                    ensure(optimal[0] == &dp, || format!("{sim:?}: dp {dp:?}, unique optimum {:?}", optimal[0]))?;
                }
                cases += 1;
            }
        }
    }
    Ok(format!("{cases} matrices agree with exhaustive search"))
}

fn pseudo_word(rng: &mut ChaCha8Rng) -> String {
    const SYL: &[&str] = &["ka", "lo", "mi", "ren", "tu", "sa", "vel", "dor", "ni", "que", "bra", "fen", "ost", "ul"];
    (0..rng.random_range(2..4)).map(|_| *SYL.choose(rng).unwrap()).collect()
}

fn para(lang: &str, seq: usize, text: String) -> Paragraph {
    Paragraph { book_id: "synthetic".into(), lang: lang.into(), seq, text, sentence_ids: Vec::new() }
}

/// 50 English paragraphs. The target drops 10% of them, its pivot replaces
/// 15% of words, and lure paragraphs borrow a few words from a neighbour.
pub fn alignment_recovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let en: Vec<Paragraph> = (0..50)
        .map(|i| {
            let n = rng.random_range(40..80);
            para("en", i, (0..n).map(|_| pseudo_word(&mut rng)).collect::<Vec<_>>().join(" "))
        })
        .collect();
    let mut deleted: Vec<usize> = (0..50).collect();
    deleted.shuffle(&mut rng);
    deleted.truncate(5);

    let (mut target, mut pivot, mut truth) = (Vec::new(), Vec::new(), HashSet::new());
    for e in &en {
        if !deleted.contains(&e.seq) {
            let words: Vec<String> = e
                .text
                .split_whitespace()
                .map(|w| if rng.random_bool(0.15) { pseudo_word(&mut rng) } else { w.to_string() })
                .collect();
            truth.insert((e.seq, target.len()));
            pivot.push(para("en", target.len(), words.join(" ")));
            target.push(para("es", target.len(), format!("{} es", words.join(" "))));
        }
        if e.seq % 10 == 9 {
            let mut words: Vec<String> = e.text.split_whitespace().take(6).map(String::from).collect();
            words.extend((0..30).map(|_| pseudo_word(&mut rng)));
            words.shuffle(&mut rng);
            pivot.push(para("en", target.len(), words.join(" ")));
            target.push(para("es", target.len(), words.join(" ")));
        }
    }
    let cands = align_translation(&en, &target, &pivot, &AlignConfig::default()).map_err(|e| e.to_string())?;
    let survivors: Vec<(usize, usize)> = cands
        .iter()
        .filter(|c| matches!(c.verdict, Verdict::Kept | Verdict::PendingReview))
        .map(|c| (c.en_seq, c.tgt_seq))
        .collect();
    let false_pairs = survivors.iter().filter(|p| !truth.contains(p)).count();
    let filtered = cands.len() - survivors.len();
    let recall = survivors.iter().filter(|p| truth.contains(p)).count() as f64 / truth.len() as f64;
    ensure(false_pairs == 0, || format!("{false_pairs} false pairs survived the filters"))?;
    ensure(recall >= 0.95, || format!("recall {recall:.3} < 0.95"))?;
    let exhaustive = dp_matches_exhaustive()?;
    Ok(format!(
        "recall {:.1}% of {} true pairs, {filtered} lure pairs filtered, 0 false survivors; {exhaustive}",
        recall * 100.0,
        truth.len()
    ))
}

// ---------------------------------------------------------------------------
// end to end with mock endpoints

fn spec(client: Arc<dyn ChatEndpoint>) -> EndpointSpec {
    let id = client.id().to_string();
    EndpointSpec { config: EndpointConfig::new(id.clone(), "http://mock.invalid", id), client }
}

fn accuracy(scores: &[ScoreRecord], endpoint: &str, task: TaskKind) -> (f64, usize) {
    let rows: Vec<_> = scores.iter().filter(|s| s.endpoint == endpoint && s.task == task).collect();
    let hits = rows.iter().filter(|s| s.correct == Some(true)).count();
    (hits as f64 / rows.len().max(1) as f64, rows.len())
}

pub fn mock_end_to_end() -> Check {
    let start = Instant::now();
    let lib = library();
    let tasks = ProbeTask::all();
    let memorizer: Arc<dyn ChatEndpoint> = Arc::new(MemorizingEndpoint::new(&lib, &tasks, PrefixSplit::WordMidpoint));
    let endpoints = [spec(memorizer), spec(Arc::new(RandomEndpoint))];
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("raw.jsonl");
    let sink = JsonlSink::open(&path).map_err(|e| e.to_string())?;
    let summary =
        run_suite(&lib.passages, &tasks, &endpoints, &sink, &SuiteOptions::default()).map_err(|e| e.to_string())?;
    ensure(summary.errors == 0, || format!("{} error rows", summary.errors))?;
    let raw = read_results(&path).map_err(|e| e.to_string())?;

    let (cfg, metric) = (ScoreConfig::default(), MetricConfig::default());
    let scores = ScoringContext::new(&lib.passages, &lib.books, &lib.gazetteer, &cfg, &metric).score_all(&raw);
    let (m_dp, n_dp) = accuracy(&scores, "memorizer", TaskKind::DirectProbe);
    let (m_nc, n_nc) = accuracy(&scores, "memorizer", TaskKind::NameCloze);
    let pp: Vec<f64> = scores
        .iter()
        .filter(|s| s.endpoint == "memorizer" && s.task == TaskKind::PrefixProbe)
        .filter_map(|s| s.metric_value)
        .collect();
    let m_pp = pp.iter().sum::<f64>() / pp.len().max(1) as f64;
    let (r_dp, _) = accuracy(&scores, "random", TaskKind::DirectProbe);
    let (r_nc, _) = accuracy(&scores, "random", TaskKind::NameCloze);
    let took = start.elapsed();
    let line = format!(
        "memorizer dp {:.1}% ({n_dp}) nc {:.1}% ({n_nc}) pp chrf {m_pp:.2}; random dp {:.1}% nc {:.1}%; {took:.2?}",
        m_dp * 100.0,
        m_nc * 100.0,
        r_dp * 100.0,
        r_nc * 100.0
    );
    ensure(n_dp > 0 && n_nc > 0 && !pp.is_empty(), || format!("empty task: {line}"))?;
    ensure(m_dp == 1.0 && m_nc == 1.0 && m_pp >= 99.0, || line.clone())?;
    ensure(r_dp == 0.0 && r_nc <= 0.05, || line.clone())?;
    ensure(took < Duration::from_secs(60), || line.clone())?;
    Ok(line)
}

// ---------------------------------------------------------------------------
// perturbations

pub fn perturbation_invariants() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let aliases = ["Tom", "Tom Sawyer", "Mr. Sawyer"];
    let fillers = ["river", "Tomás", "Tommy", "sawyer", "and", "Sawyer,", "it", "—", "said", "Mr."];
    for i in 0..1000 {
        let n = rng.random_range(1..40);
        let mut words: Vec<&str> = (0..n).map(|_| *fillers.choose(&mut rng).unwrap()).collect();
        for _ in 0..rng.random_range(0..3) {
            let at = rng.random_range(0..=words.len());
            words.insert(at, aliases.choose(&mut rng).unwrap());
        }
        let text = words.join(if i % 7 == 0 { "  " } else { " " });

        let seed = derive_seed(&format!("p{i}"), "en", "shuffled");
        let shuffled = shuffle_words(&text, seed);
        ensure(shuffled == shuffle_words(&text, seed), || format!("shuffle not deterministic: {text:?}"))?;
        let mut a: Vec<&str> = text.split_whitespace().collect();
        let mut b: Vec<&str> = shuffled.split_whitespace().collect();
        a.sort_unstable();
        b.sort_unstable();
        ensure(a == b, || format!("shuffle changed tokens: {text:?} -> {shuffled:?}"))?;

        let found = find_alias_matches(&text, &aliases).len();
        match mask_character(&text, &aliases) {
            Ok(masked) => {
                ensure(find_alias_matches(&masked, &aliases).is_empty(), || format!("alias left in {masked:?}"))?;
                ensure(masked.matches(MASK_TOKEN).count() == found, || format!("mask count wrong in {masked:?}"))?;
            }
            Err(_) => ensure(found == 0, || format!("mask failed on {text:?}"))?,
        }

        let with_mask = text.replacen("river", MASK_TOKEN, 2);
        let protected = protect_placeholders(&with_mask);
        ensure(!protected.contains(MASK_TOKEN), || "mask survived protection".into())?;
        ensure(protected.matches(PLACEHOLDER).count() == with_mask.matches(MASK_TOKEN).count(), || {
            "placeholder count changed".into()
        })?;
        ensure(restore_placeholders(&protected) == with_mask, || format!("round trip broke {with_mask:?}"))?;
    }
    Ok("1000 texts: shuffle, mask and placeholder round trip hold".into())
}

// ---------------------------------------------------------------------------
// pipeline filter boundaries

fn candidate(en_chars: usize, tgt_chars: usize, bleu: f64) -> AlignmentCandidate {
    AlignmentCandidate {
        en_seq: 0,
        tgt_seq: 0,
        lang: "es".into(),
        pivot_text: String::new(),
        bleu,
        en_chars,
        tgt_chars,
        verdict: Verdict::PendingReview,
    }
}

fn words(n: usize) -> String {
    (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
}

pub fn filter_boundaries() -> Check {
    let tok = TokenizerHandle::whitespace();
    let mk = |n: usize| Passage {
        passage_id: format!("p{n}"),
        book_id: "b".into(),
        texts: BTreeMap::from([("en".into(), words(n))]),
        gold_name: None,
        name_aliases: BTreeMap::new(),
        has_character: false,
        masked_texts: BTreeMap::new(),
        token_counts: BTreeMap::new(),
        token_counter: String::new(),
    };
    let kept = filter_min_tokens(vec![mk(39), mk(40)], "en", 40, &tok);
    ensure(kept.len() == 1 && kept[0].passage_id == "p40", || "39/40 token boundary".into())?;

    let cfg = AlignConfig::default().filter;
    let verdicts: Vec<Verdict> = apply_filters(
        vec![candidate(400, 120, 50.0), candidate(100, 100, 4.9), candidate(100, 100, 5.0), candidate(360, 120, 50.0)],
        &cfg,
    )
    .into_iter()
    .map(|c| c.verdict)
    .collect();
    let want = [Verdict::DroppedLength, Verdict::DroppedBleu, Verdict::PendingReview, Verdict::PendingReview];
    ensure(verdicts == want, || format!("alignment verdicts {verdicts:?}"))?;

    let qc = QcConfig::default();
    let det = HeuristicDetector::default();
    let chunk = "uno dos tres cuatro cinco seis siete ocho nueve diez once doce trece catorce quince";
    let looping = format!("{chunk} {chunk} {chunk} {}", words(5));
    ensure(looping.split_whitespace().count() == 50, || "looping text is not 50 tokens".into())?;
    let v = qc_translation("x", &looping, "es", &det, &qc);
    ensure(v.reasons.contains(&QcReason::NgramRepetition), || format!("repetition missed: {v:?}"))?;
    let src = format!("{PLACEHOLDER} vio el río");
    let v = qc_translation(&src, &format!("{PLACEHOLDER} y {PLACEHOLDER} vio"), "es", &det, &qc);
    ensure(v.reasons == [QcReason::PlaceholderMismatch].into(), || format!("placeholder mismatch missed: {v:?}"))?;
    let v = qc_translation(&src, &format!("{PLACEHOLDER} vio el río desde el puente"), "es", &det, &qc);
    ensure(v.ok, || format!("clean translation flagged: {v:?}"))?;
    Ok("39/40 tokens, 400/120 length, bleu 4.9/5.0, 3x15-gram loop, placeholder 1/2, clean".into())
}

// ---------------------------------------------------------------------------
// scoring regression

pub fn scoring_regression() -> Check {
    let problems = fixture_mismatches();
    ensure(problems.is_empty(), || problems.join("; "))?;
    let (records, _, _) = score_fixture();
    Ok(format!("{} frozen rows byte-identical and matching intended labels", records.len()))
}

// ---------------------------------------------------------------------------
// resume

pub fn resume_idempotence() -> Check {
    let lib = library();
    let tasks = ProbeTask::all();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("raw.jsonl");
    let run = |stop_after: Option<usize>| -> Result<(Arc<CountingEndpoint<MemorizingEndpoint>>, bool), String> {
        let cancel = Arc::new(AtomicBool::new(false));
        let inner = MemorizingEndpoint::new(&lib, &tasks, PrefixSplit::WordMidpoint);
        let ep = Arc::new(CountingEndpoint::new(inner, stop_after, cancel.clone()));
        let sink = JsonlSink::open(&path).map_err(|e| e.to_string())?;
        let opts = SuiteOptions { cancel: Some(cancel), ..SuiteOptions::default() };
        let summary = run_suite(&lib.passages, &tasks, &[spec(ep.clone())], &sink, &opts).map_err(|e| e.to_string())?;
        Ok((ep, summary.interrupted))
    };
    let (first, interrupted) = run(Some(150))?;
    ensure(interrupted, || "first run was not interrupted".into())?;
    let partial = read_results(&path).map_err(|e| e.to_string())?.len();
    let (second, _) = run(None)?;
    let (third, _) = run(None)?;

    let rows = read_results(&path).map_err(|e| e.to_string())?;
    let keys: HashSet<_> = rows.iter().map(|r| r.key()).collect();
    ensure(keys.len() == rows.len(), || format!("{} duplicate rows", rows.len() - keys.len()))?;
    let mut calls: HashMap<String, usize> = HashMap::new();
    for ep in [&first, &second] {
        for (k, n) in ep.calls.lock().unwrap().iter() {
            *calls.entry(k.clone()).or_default() += n;
        }
    }
    let repeats = calls.values().filter(|&&n| n > 1).count();
    ensure(repeats == 0, || format!("{repeats} prompts were sent twice"))?;
    ensure(calls.len() == rows.len(), || format!("{} prompts sent, {} rows", calls.len(), rows.len()))?;
    let third_calls = third.total.load(Ordering::SeqCst);
    ensure(third_calls == 0, || format!("third run issued {third_calls} calls"))?;
    Ok(format!("stopped at {partial} rows, resumed to {}, no duplicates, third run issued 0 calls", rows.len()))
}

// ---------------------------------------------------------------------------
// paid smoke run

/// Direct probe of 30 English passages against a real endpoint. `None`
/// unless LITPROBE_SMOKE_URL, _MODEL, _DATASET and _CORPUS are set;
/// LITPROBE_SMOKE_KEY_ENV names the variable holding the API key.
pub fn paid_smoke() -> Option<Check> {
    let var = |k: &str| std::env::var(format!("LITPROBE_SMOKE_{k}")).ok();
    let (url, model, dataset, corpus) = (var("URL")?, var("MODEL")?, var("DATASET")?, var("CORPUS")?);
    Some((|| {
        let corpus = litprobe::corpus::CorpusConfig::load(corpus.as_ref()).map_err(|e| e.to_string())?;
        let mut passages: Vec<Passage> = litprobe::jsonl::read(dataset.as_ref()).map_err(|e| e.to_string())?;
        passages.retain(|p| p.texts.contains_key("en"));
        passages.truncate(30);
        let mut cfg = EndpointConfig::new("smoke", url, model);
        cfg.api_key_env = var("KEY_ENV");
        let tasks = [
            ProbeTask::new(TaskKind::DirectProbe, litprobe::Perturbation::Standard).unwrap(),
            ProbeTask::new(TaskKind::DirectProbe, litprobe::Perturbation::NoCharacter).unwrap(),
        ];
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let path = dir.path().join("raw.jsonl");
        let sink = JsonlSink::open(&path).map_err(|e| e.to_string())?;
        let opts = SuiteOptions { langs: Some(vec!["en".into()]), ..SuiteOptions::default() };
        run_suite(&passages, &tasks, &[EndpointSpec::http(cfg)], &sink, &opts).map_err(|e| e.to_string())?;
        let raw = read_results(&path).map_err(|e| e.to_string())?;
        let (books, gazetteer) = (corpus.metas(), corpus.gazetteer());
        let (sc, metric) = (ScoreConfig::default(), MetricConfig::default());
        let scores = ScoringContext::new(&passages, &books, &gazetteer, &sc, &metric).score_all(&raw);
        let (acc, n) = accuracy(&scores, "smoke", TaskKind::DirectProbe);
        let line = format!("direct-probe accuracy {:.1}% over {n} passages", acc * 100.0);
        ensure(n > 0 && acc >= 0.5, || line.clone())?;
        Ok(line)
    })())
}
