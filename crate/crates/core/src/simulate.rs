//! Synthetic classifiers with controllable accuracy and calibration.
//!
//! For every example and model a correctness probability `c` is drawn from a
//! Beta distribution stretched onto `[1/C, 1]` whose mean equals the model's
//! accuracy; `sharpness` is the Beta concentration. The model is right with
//! probability `c`. A right answer is emitted with confidence `c`; a wrong
//! answer with `1 - (1 - c) / (1 + miscalibration)`, so `miscalibration = 0`
//! gives a calibrated model and larger values make its mistakes overconfident.
//! Remaining mass is split evenly over the other classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CorpusRecord, LabelSpace, LogitBundle, ScoreRow};

/// Smallest emitted class probability, keeps logits finite.
const MIN_EMITTED_PROBABILITY: f64 = 1e-15;
/// Keeps the Beta mean strictly inside (0, 1).
const MEAN_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    pub name: String,
    pub accuracy: f64,
    pub sharpness: f64,
    #[serde(default)]
    pub miscalibration: f64,
}

impl SyntheticModelSpec {
    pub fn new(name: impl Into<String>, accuracy: f64, sharpness: f64, miscalibration: f64) -> Self {
        Self {
            name: name.into(),
            accuracy,
            sharpness,
            miscalibration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub models: Vec<SyntheticModelSpec>,
    pub n: usize,
    pub prior: Vec<f64>,
    pub seed: u64,
    /// Class names; defaults to human/machine for two classes, `c0..` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

impl SimulationConfig {
    pub fn label_space(&self) -> Result<LabelSpace> {
        match &self.labels {
            Some(labels) => LabelSpace::new(labels.clone()),
            None if self.prior.len() == 2 => Ok(LabelSpace::binary()),
            None => LabelSpace::new((0..self.prior.len()).map(|c| format!("c{c}"))),
        }
    }

    pub fn validate(&self) -> Result<LabelSpace> {
        let labels = self.label_space().map_err(|e| Error::Config(e.to_string()))?;
        if labels.len() != self.prior.len() {
            return Err(Error::Config(format!(
                "{} labels but {} prior entries",
                labels.len(),
                self.prior.len()
            )));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.prior.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Config("prior entries must be finite and nonnegative".into()));
        }
        let total: f64 = self.prior.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("prior sums to {total}, expected 1")));
        }
        if self.models.is_empty() {
            return Err(Error::Config("no models to simulate".into()));
        }
        let chance = 1.0 / labels.len() as f64;
        for m in &self.models {
            if m.name.is_empty() {
                return Err(Error::Config("model with empty name".into()));
            }
            if !(m.accuracy >= chance && m.accuracy <= 1.0) {
                return Err(Error::Config(format!(
                    "model {:?}: accuracy {} must lie in [{chance}, 1]",
                    m.name, m.accuracy
                )));
            }
            if !(m.sharpness.is_finite() && m.sharpness > 0.0) {
                return Err(Error::Config(format!("model {:?}: sharpness must be > 0", m.name)));
            }
            if !(m.miscalibration.is_finite() && m.miscalibration >= 0.0) {
                return Err(Error::Config(format!("model {:?}: miscalibration must be >= 0", m.name)));
            }
        }
        Ok(labels)
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub label_space: LabelSpace,
    /// Labeled records with empty text, ids `sim-000000`, `sim-000001`, ...
    pub gold: Vec<CorpusRecord>,
    pub bundles: Vec<LogitBundle>,
}

fn draw_class(rng: &mut ChaCha8Rng, prior: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (c, &p) in prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return c;
        }
    }
    // Rounding left the cumulative sum just below 1; take the last nonzero class.
    prior.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Generates a labeled corpus and one logit bundle per model spec.
///
/// Gold labels come from stream 0 of a ChaCha8 generator seeded with
/// `config.seed`; model `i` draws from stream `i + 1`, so adding a model
/// does not perturb the others.
pub fn simulate(config: &SimulationConfig) -> Result<SimulatedData> {
    let labels = config.validate()?;
    let classes = labels.len();
    let chance = 1.0 / classes as f64;

    let mut gold_rng = ChaCha8Rng::seed_from_u64(config.seed);
    gold_rng.set_stream(0);
    let width = config.n.saturating_sub(1).to_string().len().max(6);
    let gold: Vec<CorpusRecord> = (0..config.n)
        .map(|i| {
            let mut r = CorpusRecord::new(format!("sim-{i:0width$}"), "", "en")
                .with_label(draw_class(&mut gold_rng, &config.prior));
            r.source = "synthetic".into();
            r
        })
        .collect();

    let mut bundles = Vec::with_capacity(config.models.len());
    for (m, spec) in config.models.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(m as u64 + 1);
        let mean = ((spec.accuracy - chance) / (1.0 - chance)).clamp(MEAN_MARGIN, 1.0 - MEAN_MARGIN);
        let beta = Beta::new(mean * spec.sharpness, (1.0 - mean) * spec.sharpness)
            .map_err(|e| Error::Config(format!("model {:?}: {e}", spec.name)))?;

        let mut rows = Vec::with_capacity(config.n);
        for record in &gold {
            let truth = record.label.expect("simulated records are labeled");
            let u: f64 = beta.sample(&mut rng);
            let c = chance + (1.0 - chance) * u.clamp(0.0, 1.0);
            let correct = rng.random_bool(c);
            let (predicted, confidence) = if correct {
                (truth, c)
            } else {
                let mut other = rng.random_range(0..classes - 1);
                if other >= truth {
                    other += 1;
                }
                (other, 1.0 - (1.0 - c) / (1.0 + spec.miscalibration))
            };
            let rest = (1.0 - confidence) / (classes - 1) as f64;
            let logits = (0..classes)
                .map(|k| {
                    let p = if k == predicted { confidence } else { rest };
                    p.max(MIN_EMITTED_PROBABILITY).ln()
                })
                .collect();
            rows.push(ScoreRow::new(record.id.clone(), logits));
        }
        bundles.push(LogitBundle::new(spec.name.clone(), labels.clone(), rows)?);
    }

    Ok(SimulatedData {
        label_space: labels,
        gold,
        bundles,
    })
}
