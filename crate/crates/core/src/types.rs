//! Shared domain types: label spaces, corpus records, logit bundles and
//! probability matrices, plus id alignment across bundles.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::error::{Error, Result};

/// Tolerance on row sums for [`ProbabilityMatrix`].
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Ordered, immutable set of class names. Class index `i` always means `labels()[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LabelSpace {
    labels: Vec<String>,
}

impl LabelSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::Schema(format!(
                "a label space needs at least 2 classes, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::Schema("empty label name".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::Schema(format!("duplicate label {label:?}")));
            }
        }
        Ok(Self { labels })
    }

    /// The task's binary space: `["human", "machine"]`.
    pub fn binary() -> Self {
        Self {
            labels: vec!["human".to_string(), "machine".to_string()],
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Case-sensitive lookup.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// One text example.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub language: String,
    pub source: String,
    pub sub_source: String,
    pub model: String,
    pub label: Option<usize>,
}

impl CorpusRecord {
    /// Record with only id, text and language set.
    pub fn new(id: impl Into<String>, text: impl Into<String>, language: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            language: language.into(),
            source: String::new(),
            sub_source: String::new(),
            model: String::new(),
            label: None,
        }
    }

    pub fn with_label(mut self, label: usize) -> Self {
        self.label = Some(label);
        self
    }
}

/// Checks id uniqueness and label range for a corpus.
pub fn validate_corpus(records: &[CorpusRecord], labels: &LabelSpace) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for record in records {
        if record.id.is_empty() {
            return Err(Error::Validation("record with empty id".into()));
        }
        if !seen.insert(record.id.as_str()) {
            return Err(Error::Validation(format!("duplicate id {:?}", record.id)));
        }
        if let Some(label) = record.label {
            if label >= labels.len() {
                return Err(Error::Validation(format!(
                    "record {:?}: label index {label} out of range for {} classes",
                    record.id,
                    labels.len()
                )));
            }
        }
    }
    Ok(())
}

/// Gold label map `id -> class index` from the labeled records of a corpus.
pub fn gold_labels(records: &[CorpusRecord]) -> HashMap<String, usize> {
    records
        .iter()
        .filter_map(|r| r.label.map(|l| (r.id.clone(), l)))
        .collect()
}

/// A per-example row of class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub id: String,
    pub values: Vec<f64>,
}

impl ScoreRow {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            values,
        }
    }
}

fn check_rows(rows: &[ScoreRow], width: usize, what: &str) -> Result<()> {
    let mut seen = HashSet::with_capacity(rows.len());
    for row in rows {
        if row.id.is_empty() {
            return Err(Error::Validation(format!("{what} row with empty id")));
        }
        if !seen.insert(row.id.as_str()) {
            return Err(Error::Validation(format!("duplicate {what} id {:?}", row.id)));
        }
        if row.values.len() != width {
            return Err(Error::Schema(format!(
                "{what} row {:?} has {} values, expected {width}",
                row.id,
                row.values.len()
            )));
        }
        if let Some(v) = row.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{what} row {:?} contains non-finite value {v}",
                row.id
            )));
        }
    }
    Ok(())
}

/// One model's raw class scores over a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitBundle {
    model_name: String,
    label_space: LabelSpace,
    rows: Vec<ScoreRow>,
}

impl LogitBundle {
    pub fn new(model_name: impl Into<String>, label_space: LabelSpace, rows: Vec<ScoreRow>) -> Result<Self> {
        check_rows(&rows, label_space.len(), "logit")?;
        Ok(Self {
            model_name: model_name.into(),
            label_space,
            rows,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One model's per-class probabilities over a corpus. Rows sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix {
    model_name: String,
    label_space: LabelSpace,
    rows: Vec<ScoreRow>,
}

impl ProbabilityMatrix {
    pub fn new(model_name: impl Into<String>, label_space: LabelSpace, rows: Vec<ScoreRow>) -> Result<Self> {
        check_rows(&rows, label_space.len(), "probability")?;
        for row in &rows {
            if row.values.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Validation(format!(
                    "probability row {:?} has a value outside [0, 1]",
                    row.id
                )));
            }
            let sum: f64 = row.values.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::Validation(format!(
                    "probability row {:?} sums to {sum}",
                    row.id
                )));
            }
        }
        Ok(Self {
            model_name: model_name.into(),
            label_space,
            rows,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn rows(&self) -> &[ScoreRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Bundles restricted to their common ids, in canonical order.
#[derive(Debug, Clone)]
pub struct Alignment {
    pub bundles: Vec<LogitBundle>,
    /// Ids present in some but not all bundles, sorted.
    pub dropped: Vec<String>,
}

/// Restricts every bundle to the intersection of ids and sorts rows
/// lexicographically by id.
pub fn align_bundles(bundles: Vec<LogitBundle>) -> Result<Alignment> {
    let first = bundles
        .first()
        .ok_or_else(|| Error::Alignment("no bundles to align".into()))?;
    let labels = first.label_space.clone();
    for bundle in &bundles[1..] {
        if bundle.label_space != labels {
            return Err(Error::Schema(format!(
                "bundle {:?} has labels {:?}, expected {:?}",
                bundle.model_name,
                bundle.label_space.labels(),
                labels.labels()
            )));
        }
    }

    let mut common: BTreeSet<&str> = first.rows.iter().map(|r| r.id.as_str()).collect();
    let mut union = common.clone();
    for bundle in &bundles[1..] {
        let ids: BTreeSet<&str> = bundle.rows.iter().map(|r| r.id.as_str()).collect();
        common = common.intersection(&ids).copied().collect();
        union.extend(ids);
    }
    if common.is_empty() {
        return Err(Error::Alignment("bundles share no example ids".into()));
    }
    let dropped: Vec<String> = union.difference(&common).map(|s| s.to_string()).collect();
    let common: HashSet<String> = common.into_iter().map(str::to_string).collect();

    let bundles = bundles
        .into_iter()
        .map(|mut bundle| {
            bundle.rows.retain(|r| common.contains(&r.id));
            bundle.rows.sort_by(|a, b| a.id.cmp(&b.id));
            bundle
        })
        .collect();
    Ok(Alignment { bundles, dropped })
}

/// Checks that matrices share a label space and the same ids in the same order.
pub fn check_aligned(matrices: &[ProbabilityMatrix]) -> Result<()> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::Alignment("no probability matrices".into()))?;
    for m in &matrices[1..] {
        if m.label_space != first.label_space {
            return Err(Error::Schema(format!(
                "matrix {:?} label space differs from {:?}",
                m.model_name, first.model_name
            )));
        }
        if m.rows.len() != first.rows.len() {
            return Err(Error::Alignment(format!(
                "matrix {:?} has {} rows, {:?} has {}",
                m.model_name,
                m.rows.len(),
                first.model_name,
                first.rows.len()
            )));
        }
        if let Some((a, b)) = m
            .rows
            .iter()
            .zip(&first.rows)
            .find(|(a, b)| a.id != b.id)
        {
            return Err(Error::Alignment(format!(
                "matrix {:?} row {:?} does not line up with {:?}",
                m.model_name, a.id, b.id
            )));
        }
    }
    Ok(())
}
