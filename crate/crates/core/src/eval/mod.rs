//! Evaluation protocols: stratified cross-validation, closed world, open
//! world (binary and multi-class), cross-resolver transfer, and runtime
//! benchmarks.

mod bench;
mod closed;
mod folds;
mod metrics;
mod open;

pub use bench::{benchmark, BenchmarkReport, BenchmarkRow};
pub use closed::{closed_world, cross_resolver};
pub use folds::stratified_kfold;
pub use metrics::{ClassMetrics, ConfusionMatrix, EvalReport, FoldMetrics};
pub use open::{
    default_thresholds, open_world_binary, open_world_multiclass, write_pr_csv, OpenWorldBinaryReport,
    OpenWorldSplit, PrCurve, PrPoint, RolePools, AGGREGATE_CLASS,
};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::CostSchedule;
use crate::features::{
    build_dns_sequence, build_vocabulary, extract, DnsSequence, FeatureError, FeatureFamily,
    GapPolicy, Vocabulary,
};
use crate::forest::{train_forest, ForestError, ForestModel, ForestParams};
use crate::knn::{KnnError, KnnModel};
use crate::trace::Trace;

/// The four implemented traffic-analysis attacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attack {
    FreqDist,
    NGrams,
    BnR,
    Segram,
}

impl Attack {
    pub fn name(self) -> &'static str {
        match self {
            Attack::FreqDist => "freq",
            Attack::NGrams => "ngrams",
            Attack::BnR => "bnr",
            Attack::Segram => "segram",
        }
    }
}

impl std::fmt::Display for Attack {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Attack {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "freq" => Ok(Attack::FreqDist),
            "ngrams" => Ok(Attack::NGrams),
            "bnr" => Ok(Attack::BnR),
            "segram" => Ok(Attack::Segram),
            other => Err(format!(
                "unknown attack {other:?} (expected freq, ngrams, bnr, or segram)"
            )),
        }
    }
}

/// Everything needed to fit one attack: the family plus classifier settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttackConfig {
    pub attack: Attack,
    pub forest: ForestParams,
    pub knn_k: usize,
    pub costs: CostSchedule,
}

impl AttackConfig {
    pub fn new(attack: Attack, seed: u64) -> Self {
        AttackConfig {
            attack,
            forest: ForestParams::with_seed(seed),
            knn_k: 1,
            costs: CostSchedule::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("class {label:?} has {have} traces, need at least {need}")]
    ClassTooSmall {
        label: String,
        have: usize,
        need: usize,
    },
    #[error("train and test datasets share no app labels")]
    NoLabelOverlap,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Knn(#[from] KnnError),
}

/// A fitted attack: the trained classifier plus whatever representation it
/// consumes. All state derives from training data only.
pub enum FittedModel {
    Forest {
        vocab: Vocabulary,
        model: ForestModel,
    },
    Knn(KnnModel),
}

impl FittedModel {
    /// Class labels in the model's probability order (sorted).
    pub fn classes(&self) -> Vec<String> {
        match self {
            FittedModel::Forest { model, .. } => model.classes.clone(),
            FittedModel::Knn(knn) => knn.classes().into_iter().map(str::to_string).collect(),
        }
    }

    /// Predicts labels for a batch of traces, in order. Includes the per
    /// trace representation work (feature extraction or sequence building).
    pub fn predict_batch(&self, traces: &[Trace]) -> Result<Vec<String>, EvalError> {
        match self {
            FittedModel::Forest { vocab, model } => {
                let vectors: Vec<_> = traces.par_iter().map(|t| extract(t, vocab)).collect();
                let preds = model.predict_batch(&vectors)?;
                Ok(preds.into_iter().map(str::to_string).collect())
            }
            FittedModel::Knn(knn) => {
                let sequences = bnr_sequences(traces)?;
                Ok(knn
                    .classify_batch(&sequences)
                    .into_iter()
                    .map(str::to_string)
                    .collect())
            }
        }
    }

    /// Probabilities over `classes()` order for one trace.
    pub fn predict_proba(&self, trace: &Trace) -> Result<Vec<f64>, EvalError> {
        match self {
            FittedModel::Forest { vocab, model } => {
                Ok(model.predict_proba(&extract(trace, vocab))?)
            }
            FittedModel::Knn(knn) => {
                let seq = build_dns_sequence(trace, GapPolicy::BnR)?;
                Ok(knn.vote_proba(&seq))
            }
        }
    }
}

fn bnr_sequences(traces: &[Trace]) -> Result<Vec<DnsSequence>, FeatureError> {
    traces
        .iter()
        .map(|t| build_dns_sequence(t, GapPolicy::BnR))
        .collect()
}

/// Fits one attack on labeled traces. Labels are free-form (evaluation
/// protocols may relabel, e.g. into an aggregate class).
pub fn fit(traces: &[Trace], labels: &[String], cfg: &AttackConfig) -> Result<FittedModel, EvalError> {
    assert_eq!(traces.len(), labels.len(), "one label per trace");
    match cfg.attack {
        Attack::FreqDist | Attack::NGrams | Attack::Segram => {
            let family = match cfg.attack {
                Attack::FreqDist => FeatureFamily::FreqDist,
                Attack::NGrams => FeatureFamily::NGrams,
                _ => FeatureFamily::Segram,
            };
            let vocab = build_vocabulary(traces, family)?;
            let vectors: Vec<_> = traces.par_iter().map(|t| extract(t, &vocab)).collect();
            let model = train_forest(&vectors, labels, vocab.len(), &cfg.forest)?;
            Ok(FittedModel::Forest { vocab, model })
        }
        Attack::BnR => {
            let sequences = bnr_sequences(traces)?;
            let refs: Vec<(DnsSequence, String)> = sequences
                .into_iter()
                .zip(labels.iter().cloned())
                .collect();
            let knn = KnnModel::new(refs, cfg.knn_k, cfg.costs)?;
            Ok(FittedModel::Knn(knn))
        }
    }
}
