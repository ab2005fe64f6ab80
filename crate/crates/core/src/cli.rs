//! `ppxfuse` command-line interface.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dataset::{balance, language_counts, plan_batches, BalancePlan};
use crate::error::{Error, Result};
use crate::fusion::{majority_vote, mean_ensemble, weighted_soft_vote, FusionResult};
use crate::io;
use crate::metrics::{evaluate_by_group, evaluate_fusion, render_table};
use crate::pipeline::{calibrate_weights, compare_strategies, load_matrices, WeightSource};
use crate::probability::{perplexity, PerplexityReport};
use crate::simulate::{simulate, SimulationConfig, SyntheticModelSpec};
use crate::types::{gold_labels, CorpusRecord, LabelSpace, ProbabilityMatrix};
use crate::weighting::WeightReport;

/// Timestamp stamped into simulated bundle manifests, fixed so reruns are byte-identical.
const SIMULATED_CREATED_AT: &str = "1970-01-01T00:00:00Z";

#[derive(Debug, Parser)]
#[command(name = "ppxfuse", version, about = "Inverse-perplexity weighted ensemble fusion")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice (default 42 for balancing, 7 for simulation).
    #[arg(long, global = true, env = "PPXFUSE_SEED")]
    pub seed: Option<u64>,

    /// Ordered class names, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_value = "human,machine")]
    pub labels: Vec<String>,

    /// Only log warnings and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
}

/// A logit bundle given as `MANIFEST,ROWS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogitsArg {
    pub manifest: PathBuf,
    pub rows: PathBuf,
}

impl FromStr for LogitsArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.split_once(',') {
            Some((m, r)) if !m.is_empty() && !r.is_empty() && !r.contains(',') => Ok(Self {
                manifest: m.into(),
                rows: r.into(),
            }),
            _ => Err(format!("expected MANIFEST,ROWS, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    /// Inverse-perplexity weighted soft vote.
    Ppx,
    /// Accuracy weighted soft vote.
    Acc,
    Mean,
    Majority,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-model perplexity against gold labels.
    Perplexity {
        #[arg(long, required = true, num_args = 1..)]
        logits: Vec<LogitsArg>,
        #[arg(long)]
        gold: PathBuf,
        /// JSONL output, one report per model; stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute a weight report from a labeled calibration corpus.
    Weights {
        #[arg(long, required = true, num_args = 1..)]
        logits: Vec<LogitsArg>,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long, value_enum, default_value = "ppx")]
        scheme: WeightSchemeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fuse bundles into predictions.
    Fuse {
        #[arg(long, required = true, num_args = 1..)]
        logits: Vec<LogitsArg>,
        /// Precomputed weight report; implies a weighted soft vote.
        #[arg(long, conflicts_with = "strategy")]
        weights: Option<PathBuf>,
        #[arg(long, value_enum)]
        strategy: Option<StrategyArg>,
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate every fusion strategy and each single model.
    Compare {
        #[arg(long, required = true, num_args = 1..)]
        logits: Vec<LogitsArg>,
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// JSON output with full per-strategy reports.
        #[arg(long)]
        out: PathBuf,
    },
    /// Downsample over-represented languages.
    Balance {
        #[arg(long)]
        corpus: PathBuf,
        /// JSON plan `{"caps": {...}, "seed": N}`; default caps en=40000, zh=20000.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Length-sorted batch plan.
    BatchPlan {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predictions file against gold labels.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also report metrics per language of the gold corpus.
        #[arg(long)]
        by_language: bool,
    },
    /// Generate a synthetic gold corpus and model bundles.
    Simulate {
        /// JSON simulation config; defaults to one calibrated 0.9 model and two
        /// overconfident 0.6 models over 10,000 examples.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightSchemeArg {
    Ppx,
    Acc,
}

/// The simulation scenario used when no config file is given.
pub fn default_simulation(seed: u64) -> SimulationConfig {
    SimulationConfig {
        models: vec![
            SyntheticModelSpec::new("calibrated-a", 0.9, 5.0, 0.0),
            SyntheticModelSpec::new("overconfident-b", 0.6, 5.0, 0.5),
            SyntheticModelSpec::new("overconfident-c", 0.6, 5.0, 0.5),
        ],
        n: 10_000,
        prior: vec![0.5, 0.5],
        seed,
        labels: None,
    }
}

fn read_bundles(args: &[LogitsArg]) -> Result<Vec<ProbabilityMatrix>> {
    let bundles = args
        .iter()
        .map(|a| io::read_logits(&a.manifest, &a.rows))
        .collect::<Result<Vec<_>>>()?;
    load_matrices(bundles)
}

fn read_gold(path: &Path, labels: &LabelSpace) -> Result<(Vec<CorpusRecord>, HashMap<String, usize>)> {
    let records = io::read_corpus(path, labels)?;
    let gold = gold_labels(&records);
    Ok((records, gold))
}

fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("in-memory JSON serialization") + "\n")
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `preds.jsonl` -> `preds.weights.json`.
pub fn weights_path_for(out: &Path) -> PathBuf {
    out.with_extension("weights.json")
}

fn fuse(
    matrices: &[ProbabilityMatrix],
    weights: Option<&Path>,
    strategy: Option<StrategyArg>,
    calibration: Option<&Path>,
    labels: &LabelSpace,
) -> Result<(FusionResult, Option<WeightReport>)> {
    if let Some(path) = weights {
        let report: WeightReport = io::read_json(path)?;
        return Ok((weighted_soft_vote(matrices, &report.to_weight_vector()?)?, None));
    }
    let strategy = strategy.unwrap_or(StrategyArg::Ppx);
    let source = match strategy {
        StrategyArg::Mean => return Ok((mean_ensemble(matrices)?, None)),
        StrategyArg::Majority => return Ok((majority_vote(matrices)?, None)),
        StrategyArg::Ppx => WeightSource::InversePerplexity,
        StrategyArg::Acc => WeightSource::Accuracy,
    };
    let calibration = calibration.ok_or_else(|| {
        Error::Config("weighted strategies need --calibration <corpus> or --weights <report>".into())
    })?;
    let (_, gold) = read_gold(calibration, labels)?;
    let (weights, report) = calibrate_weights(matrices, &gold, source)?;
    Ok((weighted_soft_vote(matrices, &weights)?, Some(report)))
}

/// Runs one parsed command. Machine-readable output goes to files (or stdout
/// for `perplexity` without `--out`); a one-line summary goes to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    log::info!("resolved configuration: {cli:?}");
    let labels = LabelSpace::new(cli.global.labels.clone())?;
    match &cli.command {
        Command::Perplexity { logits, gold, out } => {
            let matrices = read_bundles(logits)?;
            let (_, gold) = read_gold(gold, &labels)?;
            let reports = matrices
                .iter()
                .map(|m| perplexity(m, &gold))
                .collect::<Result<Vec<PerplexityReport>>>()?;
            let text = to_jsonl(&reports);
            match out {
                Some(path) => {
                    write_file(path, &text)?;
                    let summary: Vec<String> = reports
                        .iter()
                        .map(|r| format!("{}={:.6}", r.model_name, r.perplexity))
                        .collect();
                    println!("perplexity over {} examples: {}", reports[0].n_examples, summary.join(" "));
                }
                None => print!("{text}"),
            }
        }
        Command::Weights {
            logits,
            calibration,
            scheme,
            out,
        } => {
            let matrices = read_bundles(logits)?;
            let (_, gold) = read_gold(calibration, &labels)?;
            let source = match scheme {
                WeightSchemeArg::Ppx => WeightSource::InversePerplexity,
                WeightSchemeArg::Acc => WeightSource::Accuracy,
            };
            let (weights, report) = calibrate_weights(&matrices, &gold, source)?;
            io::write_json(out, &report)?;
            println!("{} weights: {:?}", weights.scheme(), weights.weights());
        }
        Command::Fuse {
            logits,
            weights,
            strategy,
            calibration,
            out,
        } => {
            let matrices = read_bundles(logits)?;
            let (result, report) = fuse(&matrices, weights.as_deref(), *strategy, calibration.as_deref(), &labels)?;
            io::write_predictions(&result, out)?;
            if let Some(report) = report {
                io::write_json(&weights_path_for(out), &report)?;
            }
            println!("fused {} examples with strategy {}", result.rows.len(), result.strategy);
        }
        Command::Compare {
            logits,
            calibration,
            gold,
            out,
        } => {
            let matrices = read_bundles(logits)?;
            let (_, calibration) = read_gold(calibration, &labels)?;
            let (_, evaluation) = read_gold(gold, &labels)?;
            let scores = compare_strategies(&matrices, &calibration, &evaluation)?;
            #[derive(Serialize)]
            struct Comparison<'a> {
                strategies: &'a [crate::pipeline::StrategyScore],
            }
            io::write_json(out, &Comparison { strategies: &scores })?;
            let rows: Vec<_> = scores.into_iter().map(|s| (s.name, s.report)).collect();
            print!("{}", render_table(&rows));
        }
        Command::Balance { corpus, config, out } => {
            let records = io::read_corpus(corpus, &labels)?;
            let mut plan = match config {
                Some(path) => io::read_json::<BalancePlan>(path)?,
                None => BalancePlan::default(),
            };
            if let Some(seed) = cli.global.seed {
                plan.seed = seed;
            }
            log::info!("balance plan: {plan:?}");
            let kept = balance(&records, &plan)?;
            io::write_corpus(out, &kept, &labels)?;
            let mut summary = String::new();
            for (lang, n) in language_counts(&kept) {
                let _ = write!(summary, " {lang}={n}");
            }
            println!("kept {} of {} records:{summary}", kept.len(), records.len());
        }
        Command::BatchPlan {
            corpus,
            batch_size,
            out,
        } => {
            let records = io::read_corpus(corpus, &labels)?;
            let plan = plan_batches(&records, *batch_size)?;
            io::write_batch_plan(&plan, out)?;
            println!(
                "{} batches of up to {}; padding waste {:.4}",
                plan.batches.len(),
                plan.batch_size,
                plan.padding_waste
            );
        }
        Command::Evaluate {
            predictions,
            gold,
            out,
            by_language,
        } => {
            let result = io::read_predictions(predictions, &labels)?;
            let (records, gold) = read_gold(gold, &labels)?;
            let report = evaluate_fusion(&result, &gold)?;
            if *by_language {
                let groups: HashMap<String, String> =
                    records.iter().map(|r| (r.id.clone(), r.language.clone())).collect();
                let per_language = evaluate_by_group(result.predictions(), &gold, &groups, &labels)?;
                #[derive(Serialize)]
                struct Grouped<'a> {
                    overall: &'a crate::metrics::EvaluationReport,
                    by_language: &'a std::collections::BTreeMap<String, crate::metrics::EvaluationReport>,
                }
                io::write_json(
                    out,
                    &Grouped {
                        overall: &report,
                        by_language: &per_language,
                    },
                )?;
            } else {
                io::write_json(out, &report)?;
            }
            println!(
                "{} examples: accuracy {:.4}, micro F1 {:.4}, macro F1 {:.4}",
                report.n_examples, report.accuracy, report.micro_f1, report.macro_f1
            );
        }
        Command::Simulate { config, out_dir } => {
            let mut cfg = match config {
                Some(path) => io::read_json::<SimulationConfig>(path)?,
                None => default_simulation(7),
            };
            if let Some(seed) = cli.global.seed {
                cfg.seed = seed;
            }
            log::info!("simulation: {cfg:?}");
            let data = simulate(&cfg)?;
            std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            io::write_corpus(&out_dir.join("gold.jsonl"), &data.gold, &data.label_space)?;
            for bundle in &data.bundles {
                let name = bundle.model_name();
                io::write_logits(
                    bundle,
                    &out_dir.join(format!("{name}.manifest.json")),
                    &out_dir.join(format!("{name}.logits.jsonl")),
                    &format!("synthetic:{name}"),
                    SIMULATED_CREATED_AT,
                )?;
            }
            println!(
                "simulated {} examples for {} models into {}",
                cfg.n,
                data.bundles.len(),
                out_dir.display()
            );
        }
    }
    Ok(())
}
