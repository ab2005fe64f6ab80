//! Combining aligned per-model probabilities into one prediction per example.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{check_aligned, LabelSpace, ProbabilityMatrix, ROW_SUM_TOLERANCE};
use crate::weighting::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    WeightedSoft,
    Mean,
    Majority,
    Single,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::WeightedSoft => "weighted_soft",
            Strategy::Mean => "mean",
            Strategy::Majority => "majority",
            Strategy::Single => "single",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedRow {
    pub id: String,
    /// Absent for majority voting.
    pub probabilities: Option<Vec<f64>>,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub strategy: Strategy,
    pub label_space: LabelSpace,
    pub rows: Vec<FusedRow>,
    pub weights_used: Option<WeightVector>,
}

impl FusionResult {
    pub fn predictions(&self) -> impl Iterator<Item = (&str, usize)> + '_ {
        self.rows.iter().map(|r| (r.id.as_str(), r.predicted))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn fuse_with(matrices: &[ProbabilityMatrix], weights: &WeightVector, strategy: Strategy) -> Result<FusionResult> {
    check_aligned(matrices)?;
    if weights.len() != matrices.len() {
        return Err(Error::Schema(format!(
            "{} weights for {} models",
            weights.len(),
            matrices.len()
        )));
    }
    for (m, name) in matrices.iter().zip(weights.model_names()) {
        if m.model_name() != name {
            return Err(Error::Schema(format!(
                "weight for {name:?} is in the slot of model {:?}",
                m.model_name()
            )));
        }
    }

    let label_space = matrices[0].label_space().clone();
    let classes = label_space.len();
    let mut rows = Vec::with_capacity(matrices[0].len());
    for (r, first) in matrices[0].rows().iter().enumerate() {
        let mut fused = vec![0.0; classes];
        for (m, &w) in matrices.iter().zip(weights.weights()) {
            for (acc, &p) in fused.iter_mut().zip(&m.rows()[r].values) {
                *acc += w * p;
            }
        }
        let sum: f64 = fused.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::Domain(format!("fused row {:?} sums to {sum}", first.id)));
        }
        rows.push(FusedRow {
            id: first.id.clone(),
            predicted: argmax(&fused),
            probabilities: Some(fused),
        });
    }
    Ok(FusionResult {
        strategy,
        label_space,
        rows,
        weights_used: Some(weights.clone()),
    })
}

/// `p(c) = sum_i w_i * p_i(c)` per example, then argmax.
pub fn weighted_soft_vote(matrices: &[ProbabilityMatrix], weights: &WeightVector) -> Result<FusionResult> {
    fuse_with(matrices, weights, Strategy::WeightedSoft)
}

/// Soft vote with uniform weights.
pub fn mean_ensemble(matrices: &[ProbabilityMatrix]) -> Result<FusionResult> {
    check_aligned(matrices)?;
    let weights = WeightVector::uniform(matrices.iter().map(|m| m.model_name().to_string()).collect())?;
    fuse_with(matrices, &weights, Strategy::Mean)
}

/// One model's own distribution and argmax.
pub fn single_model(matrix: &ProbabilityMatrix) -> Result<FusionResult> {
    let weights = WeightVector::uniform(vec![matrix.model_name().to_string()])?;
    fuse_with(std::slice::from_ref(matrix), &weights, Strategy::Single)
}

/// Plurality of per-model argmax votes.
///
/// Vote ties go to the tied class with the highest summed probability
/// across models, then to the lowest class index.
pub fn majority_vote(matrices: &[ProbabilityMatrix]) -> Result<FusionResult> {
    check_aligned(matrices)?;
    let label_space = matrices[0].label_space().clone();
    let classes = label_space.len();
    let mut rows = Vec::with_capacity(matrices[0].len());
    for (r, first) in matrices[0].rows().iter().enumerate() {
        let mut votes = vec![0usize; classes];
        let mut mass = vec![0.0; classes];
        for m in matrices {
            let values = &m.rows()[r].values;
            votes[argmax(values)] += 1;
            for (acc, &p) in mass.iter_mut().zip(values) {
                *acc += p;
            }
        }
        let mut best = 0;
        for c in 1..classes {
            if votes[c] > votes[best] || (votes[c] == votes[best] && mass[c] > mass[best]) {
                best = c;
            }
        }
        rows.push(FusedRow {
            id: first.id.clone(),
            probabilities: None,
            predicted: best,
        });
    }
    Ok(FusionResult {
        strategy: Strategy::Majority,
        label_space,
        rows,
        weights_used: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ScoreRow;
    use crate::weighting::WeightScheme;

    /// One single-row binary matrix per machine-probability.
    fn models(machine: &[f64]) -> Vec<ProbabilityMatrix> {
        machine
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                ProbabilityMatrix::new(
                    format!("m{i}"),
                    LabelSpace::binary(),
                    vec![ScoreRow::new("x", vec![1.0 - p, p])],
                )
                .unwrap()
            })
            .collect()
    }

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("m{i}")).collect()
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.1, 0.9]), 1);
    }

    #[test]
    fn weighted_example() {
        let w = WeightVector::new(names(3), vec![4.0 / 7.0, 2.0 / 7.0, 1.0 / 7.0], WeightScheme::InversePerplexity)
            .unwrap();
        let out = weighted_soft_vote(&models(&[0.9, 0.4, 0.2]), &w).unwrap();
        let p = out.rows[0].probabilities.as_ref().unwrap();
        assert!((p[1] - 4.6 / 7.0).abs() < 1e-12);
        assert_eq!(out.rows[0].predicted, 1);
        assert_eq!(out.strategy, Strategy::WeightedSoft);
    }

    #[test]
    fn identical_models_fuse_to_themselves() {
        let ms = models(&[0.3, 0.3, 0.3]);
        let w = WeightVector::new(names(3), vec![0.5, 0.3, 0.2], WeightScheme::Accuracy).unwrap();
        let out = weighted_soft_vote(&ms, &w).unwrap();
        let p = out.rows[0].probabilities.as_ref().unwrap();
        assert!((p[0] - 0.7).abs() < 1e-15 && (p[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn mean_examples() {
        let out = mean_ensemble(&models(&[0.8, 0.4])).unwrap();
        assert!((out.rows[0].probabilities.as_ref().unwrap()[1] - 0.6).abs() < 1e-15);

        // Exact 0.5 / 0.5 tie resolves to class 0 ("human").
        let rows = [(0.1, 0.9), (0.6, 0.4), (0.8, 0.2)];
        let ms: Vec<_> = rows
            .iter()
            .enumerate()
            .map(|(i, &(h, m))| {
                ProbabilityMatrix::new(format!("m{i}"), LabelSpace::binary(), vec![ScoreRow::new("x", vec![h, m])])
                    .unwrap()
            })
            .collect();
        let out = mean_ensemble(&ms).unwrap();
        assert_eq!(out.rows[0].probabilities.as_ref().unwrap(), &vec![0.5, 0.5]);
        assert_eq!(out.rows[0].predicted, 0);

        let single = mean_ensemble(&models(&[0.7])).unwrap();
        assert_eq!(single.rows[0].probabilities.as_ref().unwrap(), &vec![1.0 - 0.7, 0.7]);
        assert_eq!(single.rows[0].predicted, 1);
    }

    #[test]
    fn majority_examples() {
        let out = majority_vote(&models(&[0.9, 0.7, 0.2])).unwrap();
        assert_eq!(out.rows[0].predicted, 1);
        assert!(out.rows[0].probabilities.is_none());

        assert_eq!(majority_vote(&models(&[0.3])).unwrap().rows[0].predicted, 0);

        // Split vote, summed machine mass 1.3 against human 0.7.
        assert_eq!(majority_vote(&models(&[0.9, 0.4])).unwrap().rows[0].predicted, 1);
        // Split vote, summed machine mass 0.7 against human 1.3.
        assert_eq!(majority_vote(&models(&[0.6, 0.1])).unwrap().rows[0].predicted, 0);
        // Split vote with equal mass falls back to the lowest index.
        assert_eq!(majority_vote(&models(&[0.75, 0.25])).unwrap().rows[0].predicted, 0);
    }

    #[test]
    fn weight_mismatch_is_schema_error() {
        let w = WeightVector::uniform(names(2)).unwrap();
        assert!(matches!(weighted_soft_vote(&models(&[0.1, 0.2, 0.3]), &w), Err(Error::Schema(_))));
        let w = WeightVector::uniform(vec!["m1".into(), "m0".into()]).unwrap();
        assert!(matches!(weighted_soft_vote(&models(&[0.1, 0.2]), &w), Err(Error::Schema(_))));
    }

    #[test]
    fn misaligned_matrices_are_rejected() {
        let mut ms = models(&[0.1, 0.2]);
        ms[1] = ProbabilityMatrix::new("m1", LabelSpace::binary(), vec![ScoreRow::new("y", vec![0.5, 0.5])]).unwrap();
        assert!(matches!(mean_ensemble(&ms), Err(Error::Alignment(_))));
        assert!(matches!(majority_vote(&ms), Err(Error::Alignment(_))));
        assert!(matches!(mean_ensemble(&[]), Err(Error::Alignment(_))));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn odd_binary_majority_never_ties(ps in prop::collection::vec(0.0..1.0f64, 1..4)) {
                let n = if ps.len() % 2 == 0 { ps.len() - 1 } else { ps.len() };
                let ms = models(&ps[..n]);
                let votes_machine = ms.iter().filter(|m| argmax(&m.rows()[0].values) == 1).count();
                let out = majority_vote(&ms).unwrap();
                prop_assert_eq!(out.rows[0].predicted, usize::from(2 * votes_machine > n));
            }
        }
    }
}
