//! End-to-end compositions: calibrate weights on one labeled split, fuse
//! and evaluate on another.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fusion::{argmax, majority_vote, mean_ensemble, single_model, weighted_soft_vote, FusionResult, Strategy};
use crate::metrics::{evaluate_fusion, EvaluationReport};
use crate::probability::{perplexity, to_probabilities, PerplexityReport};
use crate::types::{align_bundles, LogitBundle, ProbabilityMatrix};
use crate::weighting::{accuracy_weights, inverse_perplexity_weights, WeightReport, WeightVector};

/// Aligns bundles and converts each to probabilities.
pub fn load_matrices(bundles: Vec<LogitBundle>) -> Result<Vec<ProbabilityMatrix>> {
    let aligned = align_bundles(bundles)?;
    if !aligned.dropped.is_empty() {
        log::warn!(
            "dropped {} ids not present in every bundle (first: {:?})",
            aligned.dropped.len(),
            aligned.dropped[0]
        );
    }
    aligned.bundles.iter().map(to_probabilities).collect()
}

/// Keeps only rows whose id is in `ids`, preserving order.
pub fn restrict(matrix: &ProbabilityMatrix, ids: &HashSet<&str>) -> Result<ProbabilityMatrix> {
    let rows = matrix
        .rows()
        .iter()
        .filter(|r| ids.contains(r.id.as_str()))
        .cloned()
        .collect();
    ProbabilityMatrix::new(matrix.model_name(), matrix.label_space().clone(), rows)
}

/// Rows of each matrix that carry a gold label. Fails if none do.
fn calibration_rows(matrices: &[ProbabilityMatrix], gold: &HashMap<String, usize>) -> Result<Vec<ProbabilityMatrix>> {
    let ids: HashSet<&str> = gold.keys().map(String::as_str).collect();
    let restricted = matrices.iter().map(|m| restrict(m, &ids)).collect::<Result<Vec<_>>>()?;
    if restricted.first().is_none_or(|m| m.is_empty()) {
        return Err(Error::Coverage("no calibration example appears in the logit bundles".into()));
    }
    Ok(restricted)
}

/// Per-model perplexity on the labeled calibration rows.
pub fn calibrate_perplexity(
    matrices: &[ProbabilityMatrix],
    gold: &HashMap<String, usize>,
) -> Result<Vec<PerplexityReport>> {
    calibration_rows(matrices, gold)?
        .iter()
        .map(|m| perplexity(m, gold))
        .collect()
}

/// Per-model argmax accuracy on the labeled calibration rows.
pub fn calibrate_accuracy(matrices: &[ProbabilityMatrix], gold: &HashMap<String, usize>) -> Result<Vec<(String, f64)>> {
    Ok(calibration_rows(matrices, gold)?
        .iter()
        .map(|m| {
            let hits = m.rows().iter().filter(|r| gold[&r.id] == argmax(&r.values)).count();
            (m.model_name().to_string(), hits as f64 / m.len() as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightSource {
    InversePerplexity,
    Accuracy,
}

/// Weights and the report describing how they were derived.
pub fn calibrate_weights(
    matrices: &[ProbabilityMatrix],
    gold: &HashMap<String, usize>,
    source: WeightSource,
) -> Result<(WeightVector, WeightReport)> {
    match source {
        WeightSource::InversePerplexity => {
            let reports = calibrate_perplexity(matrices, gold)?;
            let weights = inverse_perplexity_weights(&reports)?;
            let report = WeightReport::from_weights(&weights).with_perplexities(&reports);
            Ok((weights, report))
        }
        WeightSource::Accuracy => {
            let accuracies = calibrate_accuracy(matrices, gold)?;
            let weights = accuracy_weights(&accuracies)?;
            let report = WeightReport::from_weights(&weights).with_accuracies(&accuracies);
            Ok((weights, report))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StrategyScore {
    pub name: String,
    pub strategy: Strategy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightReport>,
    pub report: EvaluationReport,
}

/// Runs inverse-perplexity weighting, accuracy weighting, mean ensembling,
/// majority voting and each single model on the evaluation ids, in that order.
///
/// Weights are calibrated on `calibration`; only ids in `evaluation` are
/// fused and scored, and every one of them must be present in the bundles.
pub fn compare_strategies(
    matrices: &[ProbabilityMatrix],
    calibration: &HashMap<String, usize>,
    evaluation: &HashMap<String, usize>,
) -> Result<Vec<StrategyScore>> {
    let (ppx_weights, ppx_report) = calibrate_weights(matrices, calibration, WeightSource::InversePerplexity)?;
    let (acc_weights, acc_report) = calibrate_weights(matrices, calibration, WeightSource::Accuracy)?;

    let ids: HashSet<&str> = evaluation.keys().map(String::as_str).collect();
    let eval = matrices.iter().map(|m| restrict(m, &ids)).collect::<Result<Vec<_>>>()?;
    let present = eval.first().map_or(0, ProbabilityMatrix::len);
    if present != evaluation.len() {
        return Err(Error::Coverage(format!(
            "{} of {} evaluation ids are missing from the logit bundles",
            evaluation.len() - present,
            evaluation.len()
        )));
    }

    let score = |name: &str, result: FusionResult, weights: Option<WeightReport>| -> Result<StrategyScore> {
        Ok(StrategyScore {
            name: name.to_string(),
            strategy: result.strategy,
            weights,
            report: evaluate_fusion(&result, evaluation)?,
        })
    };

    let mut out = vec![
        score(
            "Inverse Perplexity Weighting",
            weighted_soft_vote(&eval, &ppx_weights)?,
            Some(ppx_report),
        )?,
        score(
            "Accuracy Based Weighting",
            weighted_soft_vote(&eval, &acc_weights)?,
            Some(acc_report),
        )?,
        score("Mean Ensemble", mean_ensemble(&eval)?, None)?,
        score("Majority Voting", majority_vote(&eval)?, None)?,
    ];
    for m in &eval {
        out.push(score(&format!("Single: {}", m.model_name()), single_model(m)?, None)?);
    }
    Ok(out)
}
