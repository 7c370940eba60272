//! Closed-world evaluation (stratified cross-validation) and cross-resolver
//! transfer.

use std::collections::BTreeSet;

use crate::trace::{Dataset, Trace};

use super::folds::stratified_kfold;
use super::metrics::{ConfusionMatrix, EvalReport, FoldMetrics};
use super::{fit, AttackConfig, EvalError};

fn labels_of(traces: &[Trace]) -> Vec<String> {
    traces.iter().map(|t| t.app.clone()).collect()
}

/// Stratified k-fold cross-validation: per fold, the vocabulary and model
/// are built on the train split only, then scored on the held-out split.
/// The report pools the confusion matrix over all folds.
pub fn closed_world(
    ds: &Dataset,
    cfg: &AttackConfig,
    k: usize,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let folds = stratified_kfold(ds, k, seed)?;
    let classes: Vec<String> = ds.labels().into_iter().map(str::to_string).collect();
    let mut pooled: Vec<(String, String)> = Vec::with_capacity(ds.len());
    let mut fold_metrics = Vec::with_capacity(k);
    for (f, (train_idx, test_idx)) in folds.iter().enumerate() {
        let train = ds.subset(train_idx);
        let test = ds.subset(test_idx);
        let model = fit(train.traces(), &labels_of(train.traces()), cfg)?;
        let preds = model.predict_batch(test.traces())?;
        let pairs: Vec<(String, String)> = test
            .traces()
            .iter()
            .map(|t| t.app.clone())
            .zip(preds)
            .collect();
        let fold_matrix = ConfusionMatrix::from_pairs(classes.clone(), &pairs);
        fold_metrics.push(FoldMetrics {
            fold: f,
            accuracy: fold_matrix.accuracy(),
            macro_f1: fold_matrix.macro_f1(),
            test_size: fold_matrix.total() as u32,
        });
        pooled.extend(pairs);
    }
    let confusion = ConfusionMatrix::from_pairs(classes, &pooled);
    Ok(EvalReport::from_confusion(confusion, fold_metrics, seed))
}

/// Trains on one dataset and scores on another (e.g. another resolver).
/// The vocabulary comes from the training dataset only; no folding.
pub fn cross_resolver(
    train_ds: &Dataset,
    test_ds: &Dataset,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let train_labels: BTreeSet<&str> = train_ds.labels().into_iter().collect();
    let test_labels: BTreeSet<&str> = test_ds.labels().into_iter().collect();
    if train_labels.intersection(&test_labels).next().is_none() {
        return Err(EvalError::NoLabelOverlap);
    }
    let model = fit(train_ds.traces(), &labels_of(train_ds.traces()), cfg)?;
    let preds = model.predict_batch(test_ds.traces())?;
    let pairs: Vec<(String, String)> = test_ds
        .traces()
        .iter()
        .map(|t| t.app.clone())
        .zip(preds)
        .collect();
    let classes: Vec<String> = train_labels
        .union(&test_labels)
        .map(|s| s.to_string())
        .collect();
    let confusion = ConfusionMatrix::from_pairs(classes, &pairs);
    Ok(EvalReport::from_confusion(confusion, Vec::new(), seed))
}
