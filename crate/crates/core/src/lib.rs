//! Ensemble fusion of classifier outputs with inverse-perplexity weighting.
//!
//! Each model contributes a [`LogitBundle`](types::LogitBundle) of raw class
//! scores. Bundles are aligned by example id and turned into probabilities;
//! a labeled calibration split yields a perplexity per model, and the
//! ensemble weights each model by `1 / (P - 1)`, normalized. Accuracy
//! weighting, mean ensembling and majority voting are available as baselines.
//!
//! ```
//! use ppxfuse::probability::PerplexityReport;
//! use ppxfuse::weighting::inverse_perplexity_weights;
//!
//! let reports: Vec<PerplexityReport> = [1.5, 2.0, 3.0]
//!     .iter()
//!     .map(|&p| PerplexityReport { model_name: format!("p{p}"), perplexity: p, n_examples: 1, mean_nll: p.ln() })
//!     .collect();
//! let w = inverse_perplexity_weights(&reports).unwrap();
//! assert!((w.weights()[0] - 4.0 / 7.0).abs() < 1e-12);
//! ```

pub mod cli;
pub mod dataset;
pub mod error;
pub mod fusion;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod probability;
pub mod simulate;
pub mod types;
pub mod weighting;

pub use error::{Error, Result};
