//! File formats: corpora, logit bundles, weight reports, predictions,
//! batch plans and evaluation reports.
//!
//! Row-oriented data is JSONL. Every float is written with 17 significant
//! digits so a write/read cycle reproduces the exact `f64`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize, Serializer};
use serde_json::value::RawValue;
use serde_json::Value;

use crate::dataset::BatchPlan;
use crate::error::{Error, Result};
use crate::fusion::{FusedRow, FusionResult, Strategy};
use crate::types::{validate_corpus, CorpusRecord, LabelSpace, LogitBundle, ScoreRow};

/// `x` as a JSON number with 17 significant digits.
pub fn format_f64(x: f64) -> String {
    assert!(x.is_finite(), "cannot serialize non-finite value {x}");
    format!("{x:.16e}")
}

pub(crate) fn sig17<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    RawValue::from_string(format_f64(*x))
        .map_err(serde::ser::Error::custom)?
        .serialize(s)
}

pub(crate) fn sig17_opt<S: Serializer>(x: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match x {
        Some(v) => sig17(v, s),
        None => s.serialize_none(),
    }
}

fn sig17_vec<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        seq.serialize_element(&RawValue::from_string(format_f64(*x)).map_err(serde::ser::Error::custom)?)?;
    }
    seq.end()
}

fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(Error::Validation(format!("{}: byte-order mark not allowed", path.display())));
    }
    String::from_utf8(bytes).map_err(|e| Error::Validation(format!("{}: not valid UTF-8: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Numbered lines of a JSONL file, parsed as `T`.
fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = read_text(path)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map(|v| (i + 1, v))
                .map_err(|e| Error::parse(path, i + 1, e.to_string()))
        })
        .collect()
}

fn to_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("in-memory JSON serialization");
    line.push('\n');
    line
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
}

/// Pretty JSON document with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("in-memory JSON serialization");
    text.push('\n');
    write_text(path, &text)
}

// ---------------------------------------------------------------------------
// Corpora

#[derive(Deserialize)]
#[serde(untagged)]
enum RawLabel {
    Name(String),
    Index(u64),
}

#[derive(Deserialize)]
struct CorpusLineIn {
    id: String,
    text: String,
    language: String,
    source: String,
    #[serde(default)]
    sub_source: Option<String>,
    #[serde(default)]
    model: Option<String>,
    #[serde(default)]
    label: Option<RawLabel>,
}

#[derive(Serialize)]
struct CorpusLineOut<'a> {
    id: &'a str,
    text: &'a str,
    language: &'a str,
    source: &'a str,
    sub_source: &'a str,
    model: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
}

/// Reads a JSONL corpus. Labels may be class names or integer indices into
/// `labels`.
pub fn read_corpus(path: &Path, labels: &LabelSpace) -> Result<Vec<CorpusRecord>> {
    let lines: Vec<(usize, CorpusLineIn)> = read_jsonl(path)?;
    let mut first_seen: HashMap<String, usize> = HashMap::with_capacity(lines.len());
    let mut records = Vec::with_capacity(lines.len());
    for (line_no, raw) in lines {
        if raw.id.is_empty() {
            return Err(Error::Validation(format!("{}:{line_no}: empty id", path.display())));
        }
        if let Some(prev) = first_seen.insert(raw.id.clone(), line_no) {
            return Err(Error::Validation(format!(
                "{}: duplicate id {:?} on lines {prev} and {line_no}",
                path.display(),
                raw.id
            )));
        }
        let label = match raw.label {
            None => None,
            Some(RawLabel::Name(name)) => Some(labels.index_of(&name).ok_or_else(|| {
                Error::Validation(format!(
                    "{}:{line_no}: record {:?} has unknown label {name:?}",
                    path.display(),
                    raw.id
                ))
            })?),
            Some(RawLabel::Index(i)) => {
                let i = usize::try_from(i).ok().filter(|&i| i < labels.len()).ok_or_else(|| {
                    Error::Validation(format!(
                        "{}:{line_no}: record {:?} has label index {i} out of range",
                        path.display(),
                        raw.id
                    ))
                })?;
                Some(i)
            }
        };
        records.push(CorpusRecord {
            id: raw.id,
            text: raw.text,
            language: raw.language,
            source: raw.source,
            sub_source: raw.sub_source.unwrap_or_default(),
            model: raw.model.unwrap_or_default(),
            label,
        });
    }
    validate_corpus(&records, labels)?;
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[CorpusRecord], labels: &LabelSpace) -> Result<()> {
    validate_corpus(records, labels)?;
    let mut out = String::new();
    for r in records {
        out.push_str(&to_line(&CorpusLineOut {
            id: &r.id,
            text: &r.text,
            language: &r.language,
            source: &r.source,
            sub_source: &r.sub_source,
            model: &r.model,
            label: r.label.and_then(|l| labels.label(l)),
        }));
    }
    write_text(path, &out)
}

// ---------------------------------------------------------------------------
// Logit bundles

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub model_name: String,
    pub label_order: Vec<String>,
    pub n_rows: usize,
    pub source_checkpoint: String,
    /// RFC 3339 timestamp.
    pub created_at: String,
}

#[derive(Serialize)]
struct LogitLineOut<'a> {
    id: &'a str,
    #[serde(serialize_with = "sig17_vec")]
    logits: &'a [f64],
}

pub fn read_manifest(path: &Path) -> Result<BundleManifest> {
    let manifest: BundleManifest = read_json(path)?;
    chrono::DateTime::parse_from_rfc3339(&manifest.created_at).map_err(|e| {
        Error::Manifest(format!(
            "{}: created_at {:?} is not RFC 3339: {e}",
            path.display(),
            manifest.created_at
        ))
    })?;
    Ok(manifest)
}

/// Reads a manifest and its rows file into a validated bundle.
pub fn read_logits(manifest_path: &Path, rows_path: &Path) -> Result<LogitBundle> {
    let manifest = read_manifest(manifest_path)?;
    let labels = LabelSpace::new(manifest.label_order.clone())
        .map_err(|e| Error::Manifest(format!("{}: {e}", manifest_path.display())))?;
    let width = labels.len();

    let lines: Vec<(usize, Value)> = read_jsonl(rows_path)?;
    let mut rows = Vec::with_capacity(lines.len());
    for (line_no, value) in lines {
        let at = || format!("{}:{line_no}", rows_path.display());
        let id = value
            .get("id")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Validation(format!("{}: missing string field \"id\"", at())))?;
        let logits = value
            .get("logits")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Validation(format!("{}: row {id:?} has no \"logits\" array", at())))?;
        if logits.len() != width {
            return Err(Error::Schema(format!(
                "{}: row {id:?} has {} logits, manifest declares {width} classes",
                at(),
                logits.len()
            )));
        }
        let values = logits
            .iter()
            .map(|v| {
                v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                    Error::Validation(format!("{}: row {id:?} has non-numeric logit {v}", at()))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(ScoreRow::new(id, values));
    }
    if rows.len() != manifest.n_rows {
        return Err(Error::Manifest(format!(
            "{} declares {} rows but {} has {}",
            manifest_path.display(),
            manifest.n_rows,
            rows_path.display(),
            rows.len()
        )));
    }
    LogitBundle::new(manifest.model_name, labels, rows)
        .map_err(|e| Error::Validation(format!("{}: {e}", rows_path.display())))
}

pub fn write_logits(
    bundle: &LogitBundle,
    manifest_path: &Path,
    rows_path: &Path,
    source_checkpoint: &str,
    created_at: &str,
) -> Result<()> {
    let manifest = BundleManifest {
        model_name: bundle.model_name().to_string(),
        label_order: bundle.label_space().labels().to_vec(),
        n_rows: bundle.len(),
        source_checkpoint: source_checkpoint.to_string(),
        created_at: created_at.to_string(),
    };
    let mut rows = String::new();
    for row in bundle.rows() {
        rows.push_str(&to_line(&LogitLineOut {
            id: &row.id,
            logits: &row.values,
        }));
    }
    write_json(manifest_path, &manifest)?;
    write_text(rows_path, &rows)
}

// ---------------------------------------------------------------------------
// Predictions

struct LabeledProbabilities<'a> {
    labels: &'a LabelSpace,
    values: &'a [f64],
}

impl Serialize for LabeledProbabilities<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = s.serialize_map(Some(self.values.len()))?;
        for (label, &p) in self.labels.labels().iter().zip(self.values) {
            map.serialize_entry(label, &RawValue::from_string(format_f64(p)).map_err(serde::ser::Error::custom)?)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct PredictionLineOut<'a> {
    id: &'a str,
    predicted_label: &'a str,
    probabilities: Option<LabeledProbabilities<'a>>,
    strategy: Strategy,
}

#[derive(Deserialize)]
struct PredictionLineIn {
    id: String,
    predicted_label: String,
    probabilities: Option<serde_json::Map<String, Value>>,
    strategy: Strategy,
}

pub fn write_predictions(result: &FusionResult, path: &Path) -> Result<()> {
    if result.rows.is_empty() {
        return Err(Error::Domain("refusing to write an empty prediction set".into()));
    }
    let labels = &result.label_space;
    let mut out = String::new();
    for row in &result.rows {
        let predicted_label = labels
            .label(row.predicted)
            .ok_or_else(|| Error::Validation(format!("row {:?}: predicted index out of range", row.id)))?;
        out.push_str(&to_line(&PredictionLineOut {
            id: &row.id,
            predicted_label,
            probabilities: row.probabilities.as_deref().map(|values| LabeledProbabilities { labels, values }),
            strategy: result.strategy,
        }));
    }
    write_text(path, &out)
}

/// Reads predictions back into a [`FusionResult`] (without weights).
pub fn read_predictions(path: &Path, labels: &LabelSpace) -> Result<FusionResult> {
    let lines: Vec<(usize, PredictionLineIn)> = read_jsonl(path)?;
    let strategy = lines
        .first()
        .map(|(_, l)| l.strategy)
        .ok_or_else(|| Error::Domain(format!("{}: no predictions", path.display())))?;
    let mut rows = Vec::with_capacity(lines.len());
    for (line_no, line) in lines {
        let at = format!("{}:{line_no}", path.display());
        if line.strategy != strategy {
            return Err(Error::Validation(format!("{at}: mixed strategies in one file")));
        }
        let predicted = labels
            .index_of(&line.predicted_label)
            .ok_or_else(|| Error::Validation(format!("{at}: unknown label {:?}", line.predicted_label)))?;
        let probabilities = match line.probabilities {
            None => None,
            Some(map) => {
                if map.len() != labels.len() {
                    return Err(Error::Schema(format!("{at}: expected {} probabilities", labels.len())));
                }
                let values = labels
                    .labels()
                    .iter()
                    .map(|l| {
                        map.get(l).and_then(Value::as_f64).ok_or_else(|| {
                            Error::Validation(format!("{at}: row {:?} lacks a probability for {l:?}", line.id))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                Some(values)
            }
        };
        rows.push(FusedRow {
            id: line.id,
            probabilities,
            predicted,
        });
    }
    Ok(FusionResult {
        strategy,
        label_space: labels.clone(),
        rows,
        weights_used: None,
    })
}

// ---------------------------------------------------------------------------
// Batch plans

#[derive(Serialize)]
struct BatchLine<'a> {
    ids: &'a [String],
}

#[derive(Serialize)]
struct BatchSummary {
    batch_size: usize,
    length_metric: crate::dataset::LengthMetric,
    n_batches: usize,
    n_records: usize,
    #[serde(serialize_with = "sig17")]
    padding_waste: f64,
}

/// One `{"ids": [...]}` line per batch, then a summary line.
pub fn write_batch_plan(plan: &BatchPlan, path: &Path) -> Result<()> {
    let mut out = String::new();
    for batch in &plan.batches {
        out.push_str(&to_line(&BatchLine { ids: batch }));
    }
    out.push_str(&to_line(&BatchSummary {
        batch_size: plan.batch_size,
        length_metric: plan.length_metric,
        n_batches: plan.batches.len(),
        n_records: plan.batches.iter().map(Vec::len).sum(),
        padding_waste: plan.padding_waste,
    }));
    write_text(path, &out)
}
