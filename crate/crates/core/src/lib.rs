//! Multilingual book-passage corpora and memorization probes.

pub mod align;
pub mod corpus;
pub mod jsonl;
pub mod membership;
pub mod metrics;
pub mod mtclient;
pub mod perturb;
pub mod probe;
pub mod report;
pub mod retry;
pub mod review;
pub mod sampler;
pub mod scoring;

pub use corpus::{BookMeta, Character, CharacterGazetteer, Passage, PassageSets};
pub use metrics::{chrf_pp, levenshtein_similarity, normalize_text, smoothed_bleu, MetricConfig};
pub use perturb::{Perturbation, MASK_TOKEN, PLACEHOLDER};
pub use probe::{ProbeResult, ProbeTask, TaskKind};
pub use retry::RetryPolicy;
pub use scoring::{ErrorClass, ScoreRecord};
