//! Per-model ensemble weights from perplexity or accuracy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probability::PerplexityReport;

/// Floor on `P - 1`, so a model with perplexity exactly 1 gets a large but
/// finite weight.
pub const ADJUSTED_PERPLEXITY_FLOOR: f64 = 1e-9;

/// Tolerance on the sum of a [`WeightVector`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    InversePerplexity,
    Accuracy,
    Uniform,
}

impl fmt::Display for WeightScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightScheme::InversePerplexity => "inverse_perplexity",
            WeightScheme::Accuracy => "accuracy",
            WeightScheme::Uniform => "uniform",
        })
    }
}

/// Nonnegative weights summing to 1, one per model.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    model_names: Vec<String>,
    weights: Vec<f64>,
    scheme: WeightScheme,
}

impl WeightVector {
    /// Validates an explicit weight assignment without renormalizing it.
    pub fn new(model_names: Vec<String>, weights: Vec<f64>, scheme: WeightScheme) -> Result<Self> {
        if model_names.is_empty() {
            return Err(Error::Domain("a weight vector needs at least one model".into()));
        }
        if model_names.len() != weights.len() {
            return Err(Error::Schema(format!(
                "{} model names but {} weights",
                model_names.len(),
                weights.len()
            )));
        }
        if let Some((name, w)) = model_names
            .iter()
            .zip(&weights)
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::Validation(format!("model {name:?} has invalid weight {w}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::Validation(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self {
            model_names,
            weights,
            scheme,
        })
    }

    fn normalized(model_names: Vec<String>, raw: Vec<f64>, scheme: WeightScheme) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::DegenerateWeights(format!("raw weights sum to {total}")));
        }
        let weights = raw.into_iter().map(|w| w / total).collect();
        Self::new(model_names, weights, scheme)
    }

    pub fn uniform(model_names: Vec<String>) -> Result<Self> {
        let raw = vec![1.0; model_names.len()];
        Self::normalized(model_names, raw, WeightScheme::Uniform)
    }

    /// Weight 1 on `index`, 0 elsewhere.
    pub fn one_hot(model_names: Vec<String>, index: usize, scheme: WeightScheme) -> Result<Self> {
        if index >= model_names.len() {
            return Err(Error::Schema(format!(
                "one-hot index {index} out of range for {} models",
                model_names.len()
            )));
        }
        let weights = (0..model_names.len()).map(|i| if i == index { 1.0 } else { 0.0 }).collect();
        Self::new(model_names, weights, scheme)
    }

    pub fn model_names(&self) -> &[String] {
        &self.model_names
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `w_i ∝ 1 / max(P_i - 1, 1e-9)`, normalized.
pub fn inverse_perplexity_weights(reports: &[PerplexityReport]) -> Result<WeightVector> {
    if reports.is_empty() {
        return Err(Error::Domain("no perplexity reports".into()));
    }
    let mut raw = Vec::with_capacity(reports.len());
    for r in reports {
        if !(r.perplexity >= 1.0) || !r.perplexity.is_finite() {
            return Err(Error::Domain(format!(
                "model {:?} has perplexity {}, expected a finite value >= 1",
                r.model_name, r.perplexity
            )));
        }
        raw.push(1.0 / (r.perplexity - 1.0).max(ADJUSTED_PERPLEXITY_FLOOR));
    }
    let names = reports.iter().map(|r| r.model_name.clone()).collect();
    WeightVector::normalized(names, raw, WeightScheme::InversePerplexity)
}

/// `w_i = acc_i / sum(acc)`.
pub fn accuracy_weights(accuracies: &[(String, f64)]) -> Result<WeightVector> {
    if accuracies.is_empty() {
        return Err(Error::Domain("no accuracies".into()));
    }
    if let Some((name, a)) = accuracies.iter().find(|(_, a)| !(0.0..=1.0).contains(a)) {
        return Err(Error::Domain(format!("model {name:?} has accuracy {a} outside [0, 1]")));
    }
    if accuracies.iter().all(|(_, a)| *a == 0.0) {
        return Err(Error::DegenerateWeights("all accuracies are zero".into()));
    }
    let names = accuracies.iter().map(|(n, _)| n.clone()).collect();
    let raw = accuracies.iter().map(|(_, a)| *a).collect();
    WeightVector::normalized(names, raw, WeightScheme::Accuracy)
}

/// Serializable weight report: the weights plus whatever quality signal
/// produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightReport {
    pub scheme: WeightScheme,
    pub models: Vec<ModelWeight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeight {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "crate::io::sig17_opt")]
    pub perplexity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none", serialize_with = "crate::io::sig17_opt")]
    pub accuracy: Option<f64>,
    #[serde(serialize_with = "crate::io::sig17")]
    pub weight: f64,
}

impl WeightReport {
    pub fn from_weights(weights: &WeightVector) -> Self {
        Self {
            scheme: weights.scheme(),
            models: weights
                .model_names()
                .iter()
                .zip(weights.weights())
                .map(|(name, &weight)| ModelWeight {
                    name: name.clone(),
                    perplexity: None,
                    accuracy: None,
                    weight,
                })
                .collect(),
        }
    }

    pub fn with_perplexities(mut self, reports: &[PerplexityReport]) -> Self {
        for (m, r) in self.models.iter_mut().zip(reports) {
            m.perplexity = Some(r.perplexity);
        }
        self
    }

    pub fn with_accuracies(mut self, accuracies: &[(String, f64)]) -> Self {
        for (m, (_, a)) in self.models.iter_mut().zip(accuracies) {
            m.accuracy = Some(*a);
        }
        self
    }

    pub fn to_weight_vector(&self) -> Result<WeightVector> {
        WeightVector::new(
            self.models.iter().map(|m| m.name.clone()).collect(),
            self.models.iter().map(|m| m.weight).collect(),
            self.scheme,
        )
    }
}
