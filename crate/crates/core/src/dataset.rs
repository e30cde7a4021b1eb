//! Annotation records, corpus ingestion and serialization.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labels::{ContextKind, RelationLabel};

pub const MIN_CONFIDENCE: u8 = 1;
pub const MAX_CONFIDENCE: u8 = 5;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: malformed row: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {message}")]
    UnknownToken { line: usize, message: String },
    #[error("line {line}: confidence {value} outside 1..=5")]
    ConfidenceOutOfRange { line: usize, value: i64 },
    #[error("line {line}: label set must be non-empty")]
    EmptyLabels { line: usize },
    #[error("line {line}: duplicate label {label}")]
    DuplicateLabel { line: usize, label: RelationLabel },
    #[error("line {line}: duplicate record_id {id:?}")]
    DuplicateRecordId { line: usize, id: String },
    #[error("dataset has no records")]
    Empty,
    #[error("cannot infer format from {0:?}; expected .jsonl or .csv")]
    UnknownFormat(String),
}

/// Supported corpus encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, DataError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => Ok(Format::Jsonl),
            Some("csv") => Ok(Format::Csv),
            _ => Err(DataError::UnknownFormat(path.display().to_string())),
        }
    }
}

/// One annotator's judgement of one discourse-unit pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub record_id: String,
    #[serde(rename = "annotator")]
    pub annotator_id: String,
    #[serde(rename = "team")]
    pub team_id: String,
    #[serde(rename = "conversation")]
    pub conversation_id: String,
    #[serde(rename = "du_pair")]
    pub du_pair_id: String,
    pub context: ContextKind,
    pub labels: Vec<RelationLabel>,
    pub confidence: u8,
}

impl AnnotationRecord {
    /// 0/1 indicator over the 12 relation labels.
    pub fn label_bag(&self) -> [u8; RelationLabel::COUNT] {
        let mut bag = [0u8; RelationLabel::COUNT];
        for l in &self.labels {
            bag[l.index()] = 1;
        }
        bag
    }

    pub fn has_label(&self, label: RelationLabel) -> bool {
        self.labels.contains(&label)
    }

    fn validate(&self, line: usize) -> Result<(), DataError> {
        if self.labels.is_empty() {
            return Err(DataError::EmptyLabels { line });
        }
        let mut seen = [false; RelationLabel::COUNT];
        for l in &self.labels {
            if std::mem::replace(&mut seen[l.index()], true) {
                return Err(DataError::DuplicateLabel { line, label: *l });
            }
        }
        if !(MIN_CONFIDENCE..=MAX_CONFIDENCE).contains(&self.confidence) {
            return Err(DataError::ConfidenceOutOfRange {
                line,
                value: self.confidence as i64,
            });
        }
        Ok(())
    }
}

/// Validated, immutable collection of annotation records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<AnnotationRecord>,
    by_annotator: BTreeMap<String, Vec<usize>>,
    by_du_pair: BTreeMap<String, Vec<usize>>,
    by_conversation: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    /// Builds a dataset, checking every record invariant. Line numbers in
    /// errors are 1-based record positions.
    pub fn new(records: Vec<AnnotationRecord>) -> Result<Self, DataError> {
        if records.is_empty() {
            return Err(DataError::Empty);
        }
        let mut ids = HashSet::with_capacity(records.len());
        let mut by_annotator: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_du_pair: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        let mut by_conversation: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            r.validate(i + 1)?;
            if !ids.insert(r.record_id.as_str()) {
                return Err(DataError::DuplicateRecordId {
                    line: i + 1,
                    id: r.record_id.clone(),
                });
            }
            by_annotator.entry(r.annotator_id.clone()).or_default().push(i);
            by_du_pair.entry(r.du_pair_id.clone()).or_default().push(i);
            by_conversation
                .entry(r.conversation_id.clone())
                .or_default()
                .push(i);
        }
        Ok(Self {
            records,
            by_annotator,
            by_du_pair,
            by_conversation,
        })
    }

    pub fn records(&self) -> &[AnnotationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn by_annotator(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_annotator
    }

    pub fn by_du_pair(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_du_pair
    }

    pub fn by_conversation(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.by_conversation
    }

    /// Total label tokens, Σ |labels_i|.
    pub fn label_tokens(&self) -> usize {
        self.records.iter().map(|r| r.labels.len()).sum()
    }

    pub fn into_records(self) -> Vec<AnnotationRecord> {
        self.records
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(CSV_COLUMNS).expect("in-memory write");
        for r in &self.records {
            let labels = r
                .labels
                .iter()
                .map(|l| l.token())
                .collect::<Vec<_>>()
                .join("|");
            let conf = r.confidence.to_string();
            w.write_record([
                r.record_id.as_str(),
                r.annotator_id.as_str(),
                r.team_id.as_str(),
                r.conversation_id.as_str(),
                r.du_pair_id.as_str(),
                r.context.token(),
                labels.as_str(),
                conf.as_str(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn write(&self, path: &Path, format: Format) -> Result<(), DataError> {
        let body = match format {
            Format::Jsonl => self.to_jsonl(),
            Format::Csv => self.to_csv(),
        };
        let io = |source| DataError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        f.write_all(body.as_bytes()).map_err(io)
    }
}

const CSV_COLUMNS: [&str; 8] = [
    "record_id",
    "annotator",
    "team",
    "conversation",
    "du_pair",
    "context",
    "labels",
    "confidence",
];

/// Wire form of a record before token and range validation.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    record_id: String,
    annotator: String,
    team: String,
    conversation: String,
    du_pair: String,
    context: String,
    labels: Vec<String>,
    confidence: i64,
}

impl RawRecord {
    fn into_record(self, line: usize) -> Result<AnnotationRecord, DataError> {
        let context = self
            .context
            .parse::<ContextKind>()
            .map_err(|message| DataError::UnknownToken { line, message })?;
        let labels = self
            .labels
            .iter()
            .map(|s| s.parse::<RelationLabel>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|message| DataError::UnknownToken { line, message })?;
        if !(MIN_CONFIDENCE as i64..=MAX_CONFIDENCE as i64).contains(&self.confidence) {
            return Err(DataError::ConfidenceOutOfRange {
                line,
                value: self.confidence,
            });
        }
        let rec = AnnotationRecord {
            record_id: self.record_id,
            annotator_id: self.annotator,
            team_id: self.team,
            conversation_id: self.conversation,
            du_pair_id: self.du_pair,
            context,
            labels,
            confidence: self.confidence as u8,
        };
        rec.validate(line)?;
        Ok(rec)
    }
}

/// Reads and validates a corpus file.
pub fn parse_dataset(path: &Path, format: Format) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_str(&text, format)
}

/// Parses corpus text. Lines starting with `#` are comments. Reported line
/// numbers are physical file lines.
pub fn parse_str(text: &str, format: Format) -> Result<Dataset, DataError> {
    if text.starts_with('\u{feff}') {
        return Err(DataError::Malformed {
            line: 1,
            message: "byte-order mark not allowed".into(),
        });
    }
    let rows = match format {
        Format::Jsonl => parse_jsonl(text)?,
        Format::Csv => parse_csv(text)?,
    };
    let mut ids = HashSet::with_capacity(rows.len());
    for (line, rec) in &rows {
        if !ids.insert(rec.record_id.as_str()) {
            return Err(DataError::DuplicateRecordId {
                line: *line,
                id: rec.record_id.clone(),
            });
        }
    }
    Dataset::new(rows.into_iter().map(|(_, r)| r).collect())
}

fn parse_jsonl(text: &str) -> Result<Vec<(usize, AnnotationRecord)>, DataError> {
    let mut out = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line = i + 1;
        if raw_line.trim().is_empty() || raw_line.starts_with('#') {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(raw_line).map_err(|e| DataError::Malformed {
            line,
            message: e.to_string(),
        })?;
        out.push((line, raw.into_record(line)?));
    }
    Ok(out)
}

fn parse_csv(text: &str) -> Result<Vec<(usize, AnnotationRecord)>, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| DataError::Malformed {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::Malformed {
                line: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let idx: Vec<usize> = CSV_COLUMNS.iter().map(|c| col(c)).collect::<Result<_, _>>()?;

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| DataError::Malformed {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
        let field = |k: usize| row.get(idx[k]).unwrap_or("").to_string();
        let conf_text = field(7);
        let confidence: i64 = conf_text.trim().parse().map_err(|_| DataError::Malformed {
            line,
            message: format!("confidence {conf_text:?} is not an integer"),
        })?;
        let labels_text = field(6);
        let labels = if labels_text.is_empty() {
            Vec::new()
        } else {
            labels_text.split('|').map(str::to_string).collect()
        };
        let raw = RawRecord {
            record_id: field(0),
            annotator: field(1),
            team: field(2),
            conversation: field(3),
            du_pair: field(4),
            context: field(5),
            labels,
            confidence,
        };
        out.push((line, raw.into_record(line)?));
    }
    Ok(out)
}
