//! Confusion matrices, per-class precision/recall/F1, macro/micro F1 and accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::FusionResult;
use crate::types::LabelSpace;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub label: String,
    #[serde(serialize_with = "crate::io::sig17")]
    pub precision: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub recall: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub n_examples: u64,
    pub labels: Vec<String>,
    /// Rows are gold classes, columns are predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScores>,
    #[serde(serialize_with = "crate::io::sig17")]
    pub macro_f1: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub micro_f1: f64,
    #[serde(serialize_with = "crate::io::sig17")]
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl EvaluationReport {
    /// Scores derived from a `C x C` confusion matrix (gold rows, predicted columns).
    pub fn from_confusion(labels: &LabelSpace, confusion: Vec<Vec<u64>>) -> Self {
        let c = labels.len();
        let n: u64 = confusion.iter().flatten().sum();
        let mut per_class = Vec::with_capacity(c);
        let mut tp_total = 0;
        let mut fp_total = 0;
        let mut fn_total = 0;
        for k in 0..c {
            let tp = confusion[k][k];
            let gold_k: u64 = confusion[k].iter().sum();
            let pred_k: u64 = confusion.iter().map(|row| row[k]).sum();
            let precision = ratio(tp, pred_k);
            let recall = ratio(tp, gold_k);
            per_class.push(ClassScores {
                label: labels.labels()[k].clone(),
                precision,
                recall,
                f1: harmonic(precision, recall),
                support: gold_k,
            });
            tp_total += tp;
            fp_total += pred_k - tp;
            fn_total += gold_k - tp;
        }
        let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / c as f64;
        let micro_f1 = harmonic(ratio(tp_total, tp_total + fp_total), ratio(tp_total, tp_total + fn_total));
        Self {
            n_examples: n,
            labels: labels.labels().to_vec(),
            confusion,
            per_class,
            macro_f1,
            micro_f1,
            accuracy: ratio(tp_total, n),
        }
    }
}

/// Scores `(id, predicted class)` pairs against gold labels.
///
/// Macro F1 averages over every class in `labels`, including classes that
/// never occur in gold; 0/0 counts as 0.
pub fn evaluate<'a, I>(predictions: I, gold: &HashMap<String, usize>, labels: &LabelSpace) -> Result<EvaluationReport>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let c = labels.len();
    let mut confusion = vec![vec![0u64; c]; c];
    let mut n = 0u64;
    for (id, predicted) in predictions {
        let truth = *gold
            .get(id)
            .ok_or_else(|| Error::Coverage(format!("no gold label for predicted example {id:?}")))?;
        if truth >= c || predicted >= c {
            return Err(Error::Validation(format!(
                "example {id:?}: class index out of range for {c} classes"
            )));
        }
        confusion[truth][predicted] += 1;
        n += 1;
    }
    if n == 0 {
        return Err(Error::Domain("no predictions to evaluate".into()));
    }
    Ok(EvaluationReport::from_confusion(labels, confusion))
}

pub fn evaluate_fusion(result: &FusionResult, gold: &HashMap<String, usize>) -> Result<EvaluationReport> {
    evaluate(result.predictions(), gold, &result.label_space)
}

/// Runs [`evaluate`] separately for each group (e.g. language). Predictions
/// whose id has no group are skipped.
pub fn evaluate_by_group<'a, I>(
    predictions: I,
    gold: &HashMap<String, usize>,
    groups: &HashMap<String, String>,
    labels: &LabelSpace,
) -> Result<BTreeMap<String, EvaluationReport>>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let mut buckets: BTreeMap<&str, Vec<(&'a str, usize)>> = BTreeMap::new();
    for (id, predicted) in predictions {
        if let Some(group) = groups.get(id) {
            buckets.entry(group.as_str()).or_default().push((id, predicted));
        }
    }
    buckets
        .into_iter()
        .map(|(group, preds)| Ok((group.to_string(), evaluate(preds, gold, labels)?)))
        .collect()
}

/// Plain-text table with one row per named report and micro/macro F1 columns.
pub fn render_table(rows: &[(String, EvaluationReport)]) -> String {
    let width = rows
        .iter()
        .map(|(name, _)| name.chars().count())
        .chain(std::iter::once("Strategy".len()))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "{:<width$}  {:>8}  {:>8}", "Strategy", "Micro F1", "Macro F1");
    let _ = writeln!(out, "{}", "-".repeat(width + 20));
    for (name, report) in rows {
        let _ = writeln!(out, "{:<width$}  {:>8.4}  {:>8.4}", name, report.micro_f1, report.macro_f1);
    }
    out
}
