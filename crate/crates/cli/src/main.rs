use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use litprobe::align::{align_translation, group_alignments, AlignConfig, AlignmentCandidate};
use litprobe::corpus::{
    build_passages, ingest_book, AlignedGroup, CorpusConfig, Paragraph, Passage, Splitter, ENGLISH,
};
use litprobe::membership::{check_passages, CachedIndex, HttpNgramIndex};
use litprobe::metrics::{chrf_pp, levenshtein_similarity, smoothed_bleu, MetricConfig};
use litprobe::mtclient::{
    translate_passages, ChatTranslateProvider, HeuristicDetector, HttpTranslateProvider, QcConfig, TranslationProvider,
    Translator,
};
use litprobe::perturb::{derive_seed, mask_character, shuffle_words, Perturbation};
use litprobe::probe::{
    read_results, run_suite, EndpointConfig, EndpointSpec, HttpChatEndpoint, JsonlSink, PrefixSplit, ProbeTask,
    SuiteOptions,
};
use litprobe::report::{aggregate, bucket_by_length, error_breakdown, parse_dimensions, Format};
use litprobe::review::{ReviewItem, ReviewStore};
use litprobe::sampler::{filter_min_tokens, sample_per_book, TokenizerHandle};
use litprobe::scoring::{ScoreConfig, ScoringContext};
use litprobe::{jsonl, RetryPolicy};
use serde::de::DeserializeOwned;
use serde::Deserialize;

#[derive(Parser)]
#[command(name = "litprobe", version, about = "Build multilingual book-passage probes and score model responses")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Split a plain-text book into paragraph records.
    Ingest(IngestArgs),
    /// Align a translation's paragraphs to the English original through an English pivot.
    Align(AlignArgs),
    /// Translate paragraphs into English with a chat model, producing the pivot for `align`.
    Pivot(PivotArgs),
    /// Join alignments across languages and build one-name / no-name passages.
    Passages(PassagesArgs),
    /// Compute a similarity metric for one hypothesis/reference pair.
    Metrics {
        #[command(subcommand)]
        cmd: MetricsCmd,
    },
    /// Apply a perturbation to a text.
    Perturb(PerturbArgs),
    /// Machine-translate English passages into more languages.
    Translate(TranslateArgs),
    /// Drop short passages and draw a stratified sample per book.
    Sample(SampleArgs),
    /// Send probe prompts to model endpoints.
    Probe {
        #[command(subcommand)]
        cmd: ProbeCmd,
    },
    /// Score raw probe results.
    Score(ScoreArgs),
    /// Label passages seen / unclear against an n-gram index.
    Membership(MembershipArgs),
    /// Aggregate scores into tables.
    Report(ReportArgs),
    /// Human review of candidate passages.
    Review {
        #[command(subcommand)]
        cmd: ReviewCmd,
    },
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    book: String,
    #[arg(long)]
    lang: String,
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "blank-line")]
    splitter: SplitterArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitterArg {
    BlankLine,
    Line,
}

#[derive(Args)]
struct AlignArgs {
    /// English paragraphs (JSONL from `ingest`).
    #[arg(long)]
    en: PathBuf,
    /// Target-language paragraphs.
    #[arg(long)]
    tgt: PathBuf,
    /// English translations of the target paragraphs, same order.
    #[arg(long)]
    pivot: PathBuf,
    /// TOML with `skip_penalty`, `[filter]` and `[metric]` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PivotArgs {
    #[arg(long)]
    input: PathBuf,
    /// TOML endpoint config (`base_url`, `model_name`, ...).
    #[arg(long)]
    endpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PassagesArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    book: String,
    #[arg(long)]
    en: PathBuf,
    /// `LANG=PARAGRAPHS.jsonl:CANDIDATES.jsonl`, repeated per language.
    #[arg(long = "aligned", value_name = "LANG=PARAS:CANDS")]
    aligned: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the no-name passages here.
    #[arg(long)]
    no_name_out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum MetricsCmd {
    Score {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long)]
        hyp: String,
        #[arg(long = "ref")]
        reference: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Chrf,
    Bleu,
    Levenshtein,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long, value_parser = ["mask", "shuffle", "mask+shuffle"])]
    kind: String,
    #[arg(long)]
    text: String,
    /// Character name and aliases to mask.
    #[arg(long = "alias")]
    aliases: Vec<String>,
    /// Shuffle seed; derived from passage id and language when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "adhoc")]
    passage_id: String,
    #[arg(long, default_value = "en")]
    lang: String,
}

#[derive(Args)]
struct TranslateArgs {
    #[arg(long)]
    passages: PathBuf,
    /// Comma-separated target languages.
    #[arg(long, value_delimiter = ',')]
    langs: Vec<String>,
    /// TOML with a `[primary]` and optional `[fallback]` provider.
    #[arg(long)]
    providers: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the list of deleted passages.
    #[arg(long)]
    deleted_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 100)]
    cap: usize,
    #[arg(long, default_value_t = 40)]
    min_tokens: usize,
    /// Language whose text must reach `min_tokens`.
    #[arg(long, default_value = "en")]
    lang: String,
    #[arg(long)]
    seed: u64,
    /// Subword vocabulary, one token per line; whitespace tokens otherwise.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum ProbeCmd {
    Run {
        #[arg(long)]
        dataset: PathBuf,
        /// TOML with one `[[endpoints]]` table per model.
        #[arg(long)]
        endpoints: PathBuf,
        /// `all` or a comma list such as `name_cloze/masked,direct_probe/standard`.
        #[arg(long, default_value = "all")]
        tasks: String,
        #[arg(long, value_delimiter = ',')]
        langs: Option<Vec<String>>,
        #[arg(long, value_enum, default_value = "word-midpoint")]
        prefix_split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    WordMidpoint,
    CharMidpoint,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    results: PathBuf,
    /// TOML overriding scoring defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MembershipArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "en")]
    lang: String,
    #[arg(long)]
    index_url: String,
    #[arg(long)]
    index_id: String,
    #[arg(long, default_value_t = 20)]
    window: usize,
    #[arg(long, default_value_t = 8)]
    max_in_flight: usize,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, default_value = "model,lang_group,task")]
    group_by: String,
    /// Error-class breakdown instead of accuracy.
    #[arg(long)]
    errors: bool,
    /// Dataset used to fill token counts for `length_bucket`.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: String,
    /// Stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ReviewCmd {
    /// Create a review store from candidate passages.
    Init {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_delimiter = ',')]
        annotators: Vec<String>,
        #[arg(long)]
        store: PathBuf,
    },
    Serve {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long, default_value_t = 3)]
        required: usize,
        /// Shared token; also read from REVIEW_TOKEN.
        #[arg(long, env = "REVIEW_TOKEN")]
        token: Option<String>,
        /// Directory with the built review UI.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
    /// Write the finalized passages: kept ids filtered from the dataset.
    Export {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 3)]
        required: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    jsonl::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write_jsonl<T: serde::Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    jsonl::write(path, rows).with_context(|| format!("writing {}", path.display()))
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ProviderConfig {
    /// `POST url` with `{source_lang, target_lang, texts}`.
    Http { name: String, url: String, api_key_env: Option<String> },
    /// A chat model driven by the translation template.
    Chat(EndpointConfig),
}

impl ProviderConfig {
    fn build(self) -> Arc<dyn TranslationProvider> {
        match self {
            ProviderConfig::Http { name, url, api_key_env } => {
                Arc::new(HttpTranslateProvider::new(name, url, api_key_env))
            }
            ProviderConfig::Chat(cfg) => {
                let model = cfg.model_name.clone();
                Arc::new(ChatTranslateProvider::new(Arc::new(HttpChatEndpoint::new(&cfg)), model))
            }
        }
    }
}

#[derive(Deserialize)]
struct ProvidersFile {
    primary: ProviderConfig,
    fallback: Option<ProviderConfig>,
    #[serde(default)]
    retry: RetryPolicy,
    #[serde(default)]
    qc: QcConfig,
}

#[derive(Deserialize)]
struct EndpointsFile {
    endpoints: Vec<EndpointConfig>,
}

fn ingest(a: IngestArgs) -> Result<()> {
    let corpus = CorpusConfig::load(&a.corpus)?;
    let meta = corpus.metas().remove(&a.book).with_context(|| format!("book {} not in corpus config", a.book))?;
    let raw = std::fs::read(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let splitter = match a.splitter {
        SplitterArg::BlankLine => Splitter::BlankLine,
        SplitterArg::Line => Splitter::Line,
    };
    let paras = ingest_book(&raw, &meta, &a.lang, splitter)?;
    write_jsonl(&a.out, &paras)?;
    eprintln!("{} paragraphs", paras.len());
    Ok(())
}

fn align(a: AlignArgs) -> Result<()> {
    let cfg: AlignConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => AlignConfig::default(),
    };
    let en: Vec<Paragraph> = read_jsonl(&a.en)?;
    let tgt: Vec<Paragraph> = read_jsonl(&a.tgt)?;
    let pivot: Vec<Paragraph> = read_jsonl(&a.pivot)?;
    let cands = align_translation(&en, &tgt, &pivot, &cfg)?;
    write_jsonl(&a.out, &cands)?;
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for c in &cands {
        *counts.entry(serde_json::to_value(c.verdict)?.as_str().unwrap_or("?").to_string()).or_default() += 1;
    }
    let counts: Vec<String> = counts.iter().map(|(v, n)| format!("{v} {n}")).collect();
    eprintln!("{} candidates: {}", cands.len(), counts.join(", "));
    Ok(())
}

fn pivot(a: PivotArgs) -> Result<()> {
    let cfg: EndpointConfig = read_toml(&a.endpoint)?;
    let model = cfg.model_name.clone();
    let provider = Arc::new(ChatTranslateProvider::new(Arc::new(HttpChatEndpoint::new(&cfg)), model));
    let paras: Vec<Paragraph> = read_jsonl(&a.input)?;
    let Some(src) = paras.first().map(|p| p.lang.clone()) else { bail!("no paragraphs in {}", a.input.display()) };
    let texts: Vec<String> = paras.iter().map(|p| p.text.clone()).collect();
    let mut translator = Translator::new(provider, None);
    translator.retry = cfg.retry.clone();
    let out = translator.translate_batch(&texts, &src, ENGLISH)?;
    let pivots: Vec<Paragraph> = paras
        .into_iter()
        .zip(out.texts)
        .map(|(p, text)| Paragraph { lang: ENGLISH.into(), text, sentence_ids: vec![], ..p })
        .collect();
    write_jsonl(&a.out, &pivots)
}

fn passages(a: PassagesArgs) -> Result<()> {
    let corpus = CorpusConfig::load(&a.corpus)?;
    let en: Vec<Paragraph> = read_jsonl(&a.en)?;
    let mut translations = BTreeMap::new();
    for spec in &a.aligned {
        let (lang, files) = spec.split_once('=').context("--aligned expects LANG=PARAS:CANDS")?;
        let (paras, cands) = files.split_once(':').context("--aligned expects LANG=PARAS:CANDS")?;
        let paras: Vec<Paragraph> = read_jsonl(Path::new(paras))?;
        let cands: Vec<AlignmentCandidate> = read_jsonl(Path::new(cands))?;
        translations.insert(lang.to_string(), (paras, cands));
    }
    let groups: Vec<AlignedGroup> = group_alignments(&a.book, &en, &translations);
    let sets = build_passages(&groups, &corpus.gazetteer())?;
    write_jsonl(&a.out, &sets.one_name)?;
    if let Some(p) = &a.no_name_out {
        write_jsonl(p, &sets.no_name)?;
    }
    eprintln!(
        "{} groups: {} one-name, {} no-name, {} discarded",
        groups.len(),
        sets.one_name.len(),
        sets.no_name.len(),
        sets.discarded.len()
    );
    Ok(())
}

fn perturb(a: PerturbArgs) -> Result<()> {
    let masked = a.kind.starts_with("mask");
    let shuffled = a.kind.ends_with("shuffle");
    let mut text = a.text;
    if masked {
        if a.aliases.is_empty() {
            bail!("--alias is required to mask");
        }
        text = mask_character(&text, &a.aliases)?;
    }
    if shuffled {
        let pert = if masked { Perturbation::MaskedShuffled } else { Perturbation::Shuffled };
        let seed = a.seed.unwrap_or_else(|| derive_seed(&a.passage_id, &a.lang, pert.as_str()));
        text = shuffle_words(&text, seed);
    }
    println!("{text}");
    Ok(())
}

fn translate(a: TranslateArgs) -> Result<()> {
    let providers: ProvidersFile = read_toml(&a.providers)?;
    let mut translator = Translator::new(providers.primary.build(), providers.fallback.map(ProviderConfig::build));
    translator.retry = providers.retry;
    let input: Vec<Passage> = read_jsonl(&a.passages)?;
    let outcome = translate_passages(input, &a.langs, &translator, &HeuristicDetector::default(), &providers.qc)?;
    write_jsonl(&a.out, &outcome.passages)?;
    if let Some(p) = &a.deleted_out {
        write_jsonl(p, &outcome.deleted)?;
    }
    eprintln!("{} passages kept, {} deleted", outcome.passages.len(), outcome.deleted.len());
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    let tok = match &a.vocab {
        Some(p) => TokenizerHandle::load_vocab(p)?,
        None => TokenizerHandle::whitespace(),
    };
    let input: Vec<Passage> = read_jsonl(&a.input)?;
    let total = input.len();
    let long_enough = filter_min_tokens(input, &a.lang, a.min_tokens, &tok);
    let kept = long_enough.len();
    let sampled = sample_per_book(long_enough, a.cap, a.seed);
    write_jsonl(&a.out, &sampled)?;
    eprintln!("{total} passages, {kept} with >= {} tokens, {} sampled", a.min_tokens, sampled.len());
    Ok(())
}

/// Raises the returned flag on the first Ctrl-C so workers stop taking new
/// requests. A second Ctrl-C exits immediately.
fn cancel_on_ctrl_c() -> Result<Arc<AtomicBool>> {
    let flag = Arc::new(AtomicBool::new(false));
    let rt = tokio::runtime::Builder::new_current_thread().enable_io().build()?;
    let raised = flag.clone();
    std::thread::spawn(move || {
        rt.block_on(async {
            if tokio::signal::ctrl_c().await.is_ok() {
                eprintln!("stopping after in-flight requests; press Ctrl-C again to abort");
                raised.store(true, Ordering::SeqCst);
            }
            if tokio::signal::ctrl_c().await.is_ok() {
                std::process::exit(130);
            }
        })
    });
    Ok(flag)
}

fn probe_run(
    dataset: &Path,
    endpoints: &Path,
    tasks: &str,
    langs: Option<Vec<String>>,
    split: SplitArg,
    out: &Path,
) -> Result<()> {
    let passages: Vec<Passage> = read_jsonl(dataset)?;
    let file: EndpointsFile = read_toml(endpoints)?;
    let specs: Vec<EndpointSpec> = file.endpoints.into_iter().map(EndpointSpec::http).collect();
    let tasks: Vec<ProbeTask> = if tasks == "all" {
        ProbeTask::all()
    } else {
        tasks.split(',').map(|t| t.trim().parse().map_err(anyhow::Error::msg)).collect::<Result<_>>()?
    };
    let sink = JsonlSink::open(out)?;
    let opts = SuiteOptions {
        langs,
        prefix_split: match split {
            SplitArg::WordMidpoint => PrefixSplit::WordMidpoint,
            SplitArg::CharMidpoint => PrefixSplit::CharMidpoint,
        },
        cancel: Some(cancel_on_ctrl_c()?),
    };
    let summary = run_suite(&passages, &tasks, &specs, &sink, &opts)?;
    eprintln!("{}", serde_json::to_string_pretty(&summary)?);
    if summary.interrupted {
        bail!("interrupted; rerun the same command to resume");
    }
    if !summary.failing_endpoints.is_empty() {
        bail!("every request failed for {:?}", summary.failing_endpoints);
    }
    Ok(())
}

fn score(a: ScoreArgs) -> Result<()> {
    let corpus = CorpusConfig::load(&a.corpus)?;
    let cfg: ScoreConfig = match &a.config {
        Some(p) => read_toml(p)?,
        None => ScoreConfig::default(),
    };
    cfg.validate().map_err(anyhow::Error::msg)?;
    let dataset: Vec<Passage> = read_jsonl(&a.dataset)?;
    let results = read_results(&a.results)?;
    let books = corpus.metas();
    let gazetteer = corpus.gazetteer();
    let metric = MetricConfig::default();
    let ctx = ScoringContext::new(&dataset, &books, &gazetteer, &cfg, &metric);
    let records = ctx.score_all(&results);
    write_jsonl(&a.out, &records)?;
    eprintln!("{} results, {} scored", results.len(), records.len());
    Ok(())
}

fn membership(a: MembershipArgs) -> Result<()> {
    let index = CachedIndex::open(HttpNgramIndex::new(a.index_url, a.index_id), &a.cache)?;
    let dataset: Vec<Passage> = read_jsonl(&a.dataset)?;
    let rows = check_passages(&dataset, &a.lang, &index, a.window, &RetryPolicy::default(), a.max_in_flight);
    let failed = rows.iter().filter(|r| r.error.is_some()).count();
    write_jsonl(&a.out, &rows)?;
    if failed > 0 {
        eprintln!("{failed} passages could not be labelled; see the error field");
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let dims = parse_dimensions(&a.group_by)?;
    let format: Format = a.format.parse()?;
    let mut scores: Vec<litprobe::ScoreRecord> = read_jsonl(&a.scores)?;
    if let Some(p) = &a.dataset {
        let dataset: Vec<Passage> = read_jsonl(p)?;
        let counts = dataset
            .iter()
            .flat_map(|p| p.token_counts.iter().map(|(l, n)| ((p.passage_id.clone(), l.clone()), *n)))
            .collect();
        bucket_by_length(&mut scores, &counts);
    }
    let table = if a.errors { error_breakdown(&scores, &dims)? } else { aggregate(&scores, &dims)? };
    match &a.out {
        Some(p) => table.export(p, format)?,
        None => table.write(std::io::stdout().lock(), format)?,
    }
    Ok(())
}

fn review(cmd: ReviewCmd) -> Result<()> {
    match cmd {
        ReviewCmd::Init { dataset, corpus, annotators, store } => {
            if annotators.is_empty() {
                bail!("--annotators is required");
            }
            let g = CorpusConfig::load(&corpus)?.gazetteer();
            let passages: Vec<Passage> = read_jsonl(&dataset)?;
            let items: Vec<ReviewItem> = passages.iter().map(|p| ReviewItem::from_passage(p, &g)).collect();
            ReviewStore::create(&store, &items, &annotators)?;
            eprintln!("{} items for {} annotators", items.len(), annotators.len());
        }
        ReviewCmd::Serve { store, addr, required, token, static_dir } => {
            let state = litprobe_review::AppState::new(ReviewStore::open(&store)?, required, token);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(litprobe_review::serve(addr, state, static_dir))?;
        }
        ReviewCmd::Export { store, dataset, required, out } => {
            let fin = ReviewStore::open(&store)?.finalize_unanimous(required);
            let kept: std::collections::BTreeSet<&str> = fin.kept.iter().map(String::as_str).collect();
            let passages: Vec<Passage> = read_jsonl(&dataset)?;
            let final_set: Vec<&Passage> = passages.iter().filter(|p| kept.contains(p.passage_id.as_str())).collect();
            write_jsonl(&out, &final_set)?;
            eprintln!("{} kept, {} dropped, {} pending", fin.kept.len(), fin.dropped.len(), fin.pending.len());
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::Ingest(a) => ingest(a),
        Cmd::Align(a) => align(a),
        Cmd::Pivot(a) => pivot(a),
        Cmd::Passages(a) => passages(a),
        Cmd::Metrics { cmd: MetricsCmd::Score { metric, hyp, reference } } => {
            let cfg = MetricConfig::default();
            let value = match metric {
                MetricArg::Chrf => chrf_pp(&hyp, &reference, &cfg),
                MetricArg::Bleu => smoothed_bleu(&hyp, &reference, &cfg),
                MetricArg::Levenshtein => levenshtein_similarity(&hyp, &reference),
            };
            println!("{value:.4}");
            Ok(())
        }
        Cmd::Perturb(a) => perturb(a),
        Cmd::Translate(a) => translate(a),
        Cmd::Sample(a) => sample(a),
        Cmd::Probe { cmd: ProbeCmd::Run { dataset, endpoints, tasks, langs, prefix_split, out } } => {
            probe_run(&dataset, &endpoints, &tasks, langs, prefix_split, &out)
        }
        Cmd::Score(a) => score(a),
        Cmd::Membership(a) => membership(a),
        Cmd::Report(a) => report(a),
        Cmd::Review { cmd } => review(cmd),
    }
}
