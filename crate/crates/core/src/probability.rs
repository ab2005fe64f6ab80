//! Softmax and classification perplexity.
//!
//! Perplexity here is `exp(-(1/N) * sum(ln p(gold_i)))` over a labeled
//! calibration set: 1 for a model that puts all mass on the gold class,
//! 2 for a binary model that always answers 0.5.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LogitBundle, ProbabilityMatrix, ScoreRow};

/// Gold-class probabilities are clamped to this floor before taking logs.
pub const PROBABILITY_FLOOR: f64 = 1e-12;

/// Shift-invariant softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.len() < 2 {
        return Err(Error::Domain(format!(
            "softmax needs at least 2 classes, got {}",
            logits.len()
        )));
    }
    if let Some(v) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite logit {v}")));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / sum).collect())
}

/// Applies [`softmax`] to every row of a bundle.
pub fn to_probabilities(bundle: &LogitBundle) -> Result<ProbabilityMatrix> {
    let rows = bundle
        .rows()
        .iter()
        .map(|row| Ok(ScoreRow::new(row.id.clone(), softmax(&row.values)?)))
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMatrix::new(bundle.model_name(), bundle.label_space().clone(), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerplexityReport {
    pub model_name: String,
    #[serde(serialize_with = "crate::io::sig17")]
    pub perplexity: f64,
    pub n_examples: usize,
    #[serde(serialize_with = "crate::io::sig17")]
    pub mean_nll: f64,
}

/// Perplexity of a model's probabilities against gold labels.
///
/// The sum runs left to right in lexicographic id order, so the result does
/// not depend on row order.
pub fn perplexity(probs: &ProbabilityMatrix, gold: &HashMap<String, usize>) -> Result<PerplexityReport> {
    if probs.is_empty() {
        return Err(Error::Domain(format!(
            "no examples to compute perplexity for {:?}",
            probs.model_name()
        )));
    }
    let mut rows: Vec<&ScoreRow> = probs.rows().iter().collect();
    rows.sort_by(|a, b| a.id.cmp(&b.id));

    let mut total_nll = 0.0;
    for row in &rows {
        let class = *gold.get(&row.id).ok_or_else(|| {
            Error::Coverage(format!("no gold label for example {:?}", row.id))
        })?;
        let p = *row.values.get(class).ok_or_else(|| {
            Error::Validation(format!(
                "gold label {class} for {:?} is out of range for {} classes",
                row.id,
                row.values.len()
            ))
        })?;
        total_nll -= p.clamp(PROBABILITY_FLOOR, 1.0).ln();
    }
    let n = rows.len();
    let mean_nll = total_nll / n as f64;
    Ok(PerplexityReport {
        model_name: probs.model_name().to_string(),
        perplexity: mean_nll.exp(),
        n_examples: n,
        mean_nll,
    })
}
