//! Per-language downsampling and length-sorted batch planning.

use std::collections::BTreeMap;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::CorpusRecord;

pub const DEFAULT_SEED: u64 = 42;

/// Maximum sample count per language plus the sampling seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub caps: BTreeMap<String, u64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

impl Default for BalancePlan {
    /// English capped at 40,000 and Chinese at 20,000; everything else kept.
    fn default() -> Self {
        Self {
            caps: [("en".to_string(), 40_000), ("zh".to_string(), 20_000)].into(),
            seed: DEFAULT_SEED,
        }
    }
}

impl BalancePlan {
    /// Caps used for the validation split: English 26,000, Chinese 10,000.
    pub fn validation_default() -> Self {
        Self {
            caps: [("en".to_string(), 26_000), ("zh".to_string(), 10_000)].into(),
            seed: DEFAULT_SEED,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((lang, _)) = self.caps.iter().find(|(_, &cap)| cap == 0) {
            return Err(Error::Config(format!("cap for {lang:?} must be at least 1")));
        }
        Ok(())
    }
}

/// Uniformly subsamples every language above its cap down to exactly the cap.
///
/// Selection depends only on the set of records and the seed, not on input
/// order. Output is sorted by id.
pub fn balance(corpus: &[CorpusRecord], plan: &BalancePlan) -> Result<Vec<CorpusRecord>> {
    plan.validate()?;
    let mut by_language: BTreeMap<&str, Vec<&CorpusRecord>> = BTreeMap::new();
    for record in corpus {
        by_language.entry(record.language.as_str()).or_default().push(record);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let mut kept = Vec::with_capacity(corpus.len());
    for (language, mut records) in by_language {
        let Some(&cap) = plan.caps.get(language) else {
            log::info!("language {language:?} has no cap; keeping all {} records", records.len());
            kept.extend(records);
            continue;
        };
        let cap = usize::try_from(cap).unwrap_or(usize::MAX);
        if records.len() <= cap {
            kept.extend(records);
            continue;
        }
        records.sort_by(|a, b| a.id.cmp(&b.id));
        log::info!("language {language:?}: sampling {cap} of {}", records.len());
        kept.extend(index::sample(&mut rng, records.len(), cap).into_iter().map(|i| records[i]));
    }
    kept.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(kept.into_iter().cloned().collect())
}

/// Per-language record counts.
pub fn language_counts(corpus: &[CorpusRecord]) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for r in corpus {
        *counts.entry(r.language.clone()).or_insert(0) += 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMetric {
    WhitespaceWords,
}

impl LengthMetric {
    pub fn length(self, text: &str) -> usize {
        match self {
            LengthMetric::WhitespaceWords => text.split_whitespace().count(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub batches: Vec<Vec<String>>,
    pub length_metric: LengthMetric,
    /// Fraction of padded positions that hold padding.
    pub padding_waste: f64,
}

/// Padding positions over total padded positions, given per-batch lengths.
pub fn padding_waste<B: AsRef<[usize]>>(batches: &[B]) -> f64 {
    let mut padding = 0u64;
    let mut total = 0u64;
    for batch in batches {
        let lengths = batch.as_ref();
        let max = lengths.iter().copied().max().unwrap_or(0) as u64;
        total += max * lengths.len() as u64;
        padding += lengths.iter().map(|&l| max - l as u64).sum::<u64>();
    }
    if total == 0 {
        0.0
    } else {
        padding as f64 / total as f64
    }
}

fn chunk(records: &[(&CorpusRecord, usize)], batch_size: usize) -> BatchPlan {
    let batches: Vec<Vec<String>> = records
        .chunks(batch_size)
        .map(|c| c.iter().map(|(r, _)| r.id.clone()).collect())
        .collect();
    let lengths: Vec<Vec<usize>> = records
        .chunks(batch_size)
        .map(|c| c.iter().map(|&(_, l)| l).collect())
        .collect();
    BatchPlan {
        batch_size,
        batches,
        length_metric: LengthMetric::WhitespaceWords,
        padding_waste: padding_waste(&lengths),
    }
}

fn check_plan_input(corpus: &[CorpusRecord], batch_size: usize) -> Result<()> {
    if batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    if corpus.is_empty() {
        return Err(Error::Domain("cannot plan batches for an empty corpus".into()));
    }
    Ok(())
}

/// Sorts by word count (longest first, ties by id) and chunks into batches.
pub fn plan_batches(corpus: &[CorpusRecord], batch_size: usize) -> Result<BatchPlan> {
    check_plan_input(corpus, batch_size)?;
    let metric = LengthMetric::WhitespaceWords;
    let mut sized: Vec<(&CorpusRecord, usize)> = corpus.iter().map(|r| (r, metric.length(&r.text))).collect();
    sized.sort_by(|(a, la), (b, lb)| lb.cmp(la).then_with(|| a.id.cmp(&b.id)));
    Ok(chunk(&sized, batch_size))
}

/// Chunks records in the order given, without sorting. Baseline for
/// comparing against [`plan_batches`].
pub fn plan_batches_in_order(corpus: &[CorpusRecord], batch_size: usize) -> Result<BatchPlan> {
    check_plan_input(corpus, batch_size)?;
    let metric = LengthMetric::WhitespaceWords;
    let sized: Vec<(&CorpusRecord, usize)> = corpus.iter().map(|r| (r, metric.length(&r.text))).collect();
    Ok(chunk(&sized, batch_size))
}
