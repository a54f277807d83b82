//! Tidy result tables: accuracy and mean ChrF++ per group, error-class
//! breakdowns, and CSV/JSONL export.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::scoring::ScoreRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("unknown group-by dimension {0:?}")]
    UnknownDimension(String),
    #[error("record {passage_id}/{lang} has no token count")]
    MissingTokenCount { passage_id: String, lang: String },
    #[error("unknown table format {0:?}")]
    UnknownFormat(String),
    #[error("malformed table: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dimension {
    Model,
    Lang,
    LangGroup,
    Task,
    Perturbation,
    Book,
    LengthBucket,
}

impl Dimension {
    pub const ALL: [Dimension; 7] = [
        Dimension::Model,
        Dimension::Lang,
        Dimension::LangGroup,
        Dimension::Task,
        Dimension::Perturbation,
        Dimension::Book,
        Dimension::LengthBucket,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Model => "model",
            Dimension::Lang => "lang",
            Dimension::LangGroup => "lang_group",
            Dimension::Task => "task",
            Dimension::Perturbation => "perturbation",
            Dimension::Book => "book",
            Dimension::LengthBucket => "length_bucket",
        }
    }

    fn value(self, r: &ScoreRecord) -> Result<String, ReportError> {
        Ok(match self {
            Dimension::Model => r.endpoint.clone(),
            Dimension::Lang => r.lang.clone(),
            Dimension::LangGroup => lang_group(&r.lang).to_string(),
            Dimension::Task => r.task.as_str().to_string(),
            Dimension::Perturbation => r.perturbation.as_str().to_string(),
            Dimension::Book => r.book_id.clone(),
            Dimension::LengthBucket => match r.token_count {
                Some(n) => length_bucket(n).to_string(),
                None => {
                    return Err(ReportError::MissingTokenCount {
                        passage_id: r.passage_id.clone(),
                        lang: r.lang.clone(),
                    })
                }
            },
        })
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.as_str() == s.trim())
            .ok_or_else(|| ReportError::UnknownDimension(s.to_string()))
    }
}

/// Parses a comma-separated dimension list such as `model,lang_group,task`.
pub fn parse_dimensions(spec: &str) -> Result<Vec<Dimension>, ReportError> {
    spec.split(',').filter(|s| !s.trim().is_empty()).map(str::parse).collect()
}

/// English, officially supported languages, or languages unseen in the
/// source books. Anything else is `other`.
pub fn lang_group(lang: &str) -> &'static str {
    match lang {
        "en" => "English",
        "es" | "tr" | "vi" => "official",
        "st" | "yo" | "tn" | "ty" | "mai" | "mg" => "unseen",
        _ => "other",
    }
}

pub fn length_bucket(tokens: usize) -> &'static str {
    match tokens {
        0..50 => "0-50",
        50..100 => "50-100",
        _ => "100-400+",
    }
}

/// Fills `token_count` from `(passage_id, lang)` counts. Records that
/// already carry a count keep it.
pub fn bucket_by_length(scores: &mut [ScoreRecord], token_counts: &BTreeMap<(String, String), usize>) {
    for r in scores.iter_mut().filter(|r| r.token_count.is_none()) {
        r.token_count = token_counts.get(&(r.passage_id.clone(), r.lang.clone())).copied();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Int(u64),
    Float(f64),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Int(n) => n.to_string(),
            Cell::Float(x) => format!("{x:.4}"),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Int(n) => Value::from(*n),
            Cell::Float(x) => Number::from_f64(round4(*x)).map(Value::Number).unwrap_or(Value::Null),
            Cell::Empty => Value::Null,
        }
    }

    fn rounded(&self) -> Cell {
        match self {
            Cell::Float(x) => Cell::Float(round4(*x)),
            c => c.clone(),
        }
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Text,
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<(String, ColumnKind)>,
    pub rows: Vec<Vec<Cell>>,
}

const AGG_COLUMNS: [(&str, ColumnKind); 5] = [
    ("n", ColumnKind::Int),
    ("correct", ColumnKind::Int),
    ("accuracy", ColumnKind::Float),
    ("lenient_accuracy", ColumnKind::Float),
    ("mean_chrf", ColumnKind::Float),
];

const ERROR_COLUMNS: [(&str, ColumnKind); 3] =
    [("error_class", ColumnKind::Text), ("count", ColumnKind::Int), ("share", ColumnKind::Float)];

fn key_columns(group_by: &[Dimension]) -> Vec<(String, ColumnKind)> {
    group_by.iter().map(|d| (d.as_str().to_string(), ColumnKind::Text)).collect()
}

fn group<'a>(
    scores: &'a [ScoreRecord],
    group_by: &[Dimension],
) -> Result<BTreeMap<Vec<String>, Vec<&'a ScoreRecord>>, ReportError> {
    let mut groups: BTreeMap<Vec<String>, Vec<&ScoreRecord>> = BTreeMap::new();
    for r in scores {
        let key = group_by.iter().map(|d| d.value(r)).collect::<Result<Vec<_>, _>>()?;
        groups.entry(key).or_default().push(r);
    }
    Ok(groups)
}

/// Sums in sorted order so the result does not depend on input order.
fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let mut xs: Vec<f64> = xs.collect();
    xs.sort_by(f64::total_cmp);
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// One row per non-empty group, ordered by group key. `accuracy` covers
/// records with a correctness flag; `mean_chrf` covers prefix probing.
pub fn aggregate(scores: &[ScoreRecord], group_by: &[Dimension]) -> Result<Table, ReportError> {
    let mut columns = key_columns(group_by);
    columns.extend(AGG_COLUMNS.iter().map(|(n, k)| (n.to_string(), *k)));
    let mut rows = Vec::new();
    for (key, members) in group(scores, group_by)? {
        let flagged: Vec<bool> = members.iter().filter_map(|r| r.correct).collect();
        let correct = flagged.iter().filter(|&&c| c).count();
        let accuracy = (!flagged.is_empty()).then(|| correct as f64 / flagged.len() as f64);
        let lenient = mean(members.iter().filter_map(|r| r.lenient_correct).map(|c| c as u8 as f64));
        let chrf = mean(members.iter().filter_map(|r| r.metric_value));
        let mut row: Vec<Cell> = key.into_iter().map(Cell::Text).collect();
        row.push(Cell::Int(members.len() as u64));
        row.push(if flagged.is_empty() { Cell::Empty } else { Cell::Int(correct as u64) });
        row.extend([accuracy, lenient, chrf].map(|v| v.map_or(Cell::Empty, Cell::Float)));
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

/// Counts of each error class per group, with the share of the group's
/// classified errors.
pub fn error_breakdown(scores: &[ScoreRecord], group_by: &[Dimension]) -> Result<Table, ReportError> {
    let mut columns = key_columns(group_by);
    columns.extend(ERROR_COLUMNS.iter().map(|(n, k)| (n.to_string(), *k)));
    let mut rows = Vec::new();
    for (key, members) in group(scores, group_by)? {
        let mut counts = BTreeMap::new();
        for class in members.iter().filter_map(|r| r.error_class) {
            *counts.entry(class).or_insert(0u64) += 1;
        }
        let total: u64 = counts.values().sum();
        for (class, count) in counts {
            let mut row: Vec<Cell> = key.iter().cloned().map(Cell::Text).collect();
            row.push(Cell::Text(class.as_str().to_string()));
            row.push(Cell::Int(count));
            row.push(Cell::Float(count as f64 / total as f64));
            rows.push(row);
        }
    }
    Ok(Table { columns, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Jsonl,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "jsonl" => Ok(Format::Jsonl),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

impl Table {
    /// The table as it reads back after export.
    pub fn rounded(&self) -> Table {
        Table {
            columns: self.columns.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(Cell::rounded).collect()).collect(),
        }
    }

    pub fn write<W: Write>(&self, out: W, format: Format) -> Result<(), ReportError> {
        match format {
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(self.columns.iter().map(|(n, _)| n))?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Cell::render))?;
                }
                w.flush()?;
            }
            Format::Jsonl => {
                let mut out = out;
                for row in &self.rows {
                    let obj: Map<String, Value> =
                        self.columns.iter().zip(row).map(|((n, _), c)| (n.clone(), c.json())).collect();
                    writeln!(out, "{}", Value::Object(obj))?;
                }
                out.flush()?;
            }
        }
        Ok(())
    }

    pub fn export(&self, path: &Path, format: Format) -> Result<(), ReportError> {
        self.write(BufWriter::new(File::create(path)?), format)
    }

    pub fn read(path: &Path, format: Format) -> Result<Table, ReportError> {
        match format {
            Format::Csv => read_csv(path),
            Format::Jsonl => read_jsonl(path),
        }
    }
}

fn kind_of(column: &str) -> ColumnKind {
    AGG_COLUMNS.iter().chain(ERROR_COLUMNS.iter()).find(|(n, _)| *n == column).map_or(ColumnKind::Text, |(_, k)| *k)
}

fn parse_cell(raw: &str, kind: ColumnKind) -> Result<Cell, ReportError> {
    if raw.is_empty() && kind != ColumnKind::Text {
        return Ok(Cell::Empty);
    }
    let bad = |_| ReportError::Malformed(format!("bad {kind:?} cell {raw:?}"));
    Ok(match kind {
        ColumnKind::Text => Cell::Text(raw.to_string()),
        ColumnKind::Int => Cell::Int(raw.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string()))?),
        ColumnKind::Float => Cell::Float(raw.parse().map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?),
    })
}

fn read_csv(path: &Path) -> Result<Table, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let columns: Vec<(String, ColumnKind)> = r.headers()?.iter().map(|h| (h.to_string(), kind_of(h))).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = columns.iter().zip(rec.iter()).map(|((_, k), v)| parse_cell(v, *k)).collect::<Result<_, _>>()?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

fn read_jsonl(path: &Path) -> Result<Table, ReportError> {
    let mut columns: Option<Vec<(String, ColumnKind)>> = None;
    let mut rows = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Map<String, Value> = serde_json::from_str(&line).map_err(|e| ReportError::Malformed(e.to_string()))?;
        let cols = columns.get_or_insert_with(|| obj.keys().map(|k| (k.clone(), kind_of(k))).collect());
        let mut row = Vec::with_capacity(cols.len());
        for (name, kind) in cols.iter() {
            let cell = match (obj.get(name), kind) {
                (None | Some(Value::Null), _) => Cell::Empty,
                (Some(Value::String(s)), ColumnKind::Text) => Cell::Text(s.clone()),
                (Some(Value::Number(n)), ColumnKind::Int) => {
                    Cell::Int(n.as_u64().ok_or_else(|| ReportError::Malformed(format!("{name}: {n}")))?)
                }
                (Some(Value::Number(n)), ColumnKind::Float) => Cell::Float(n.as_f64().unwrap_or(f64::NAN)),
                (Some(v), _) => return Err(ReportError::Malformed(format!("{name}: unexpected {v}"))),
            };
            row.push(cell);
        }
        rows.push(row);
    }
    Ok(Table { columns: columns.unwrap_or_default(), rows })
}
