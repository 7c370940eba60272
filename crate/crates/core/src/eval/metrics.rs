//! Confusion matrices and the derived precision/recall/F1 report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Row-major confusion counts: rows are ground truth, columns predictions,
/// both in `classes` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u32>>,
}

impl ConfusionMatrix {
    /// Tallies (truth, prediction) pairs. Every truth and prediction label
    /// must appear in `classes`.
    pub fn from_pairs(classes: Vec<String>, pairs: &[(String, String)]) -> ConfusionMatrix {
        let index: BTreeMap<&str, usize> = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let mut counts = vec![vec![0u32; classes.len()]; classes.len()];
        for (truth, pred) in pairs {
            let r = *index
                .get(truth.as_str())
                .unwrap_or_else(|| panic!("truth label {truth:?} not in class list"));
            let c = *index
                .get(pred.as_str())
                .unwrap_or_else(|| panic!("predicted label {pred:?} not in class list"));
            counts[r][c] += 1;
        }
        ConfusionMatrix { classes, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts
            .iter()
            .flat_map(|row| row.iter())
            .map(|&c| u64::from(c))
            .sum()
    }

    /// Fraction of the diagonal: trace(confusion) / sum(confusion).
    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes.len())
            .map(|i| u64::from(self.counts[i][i]))
            .sum();
        correct as f64 / self.total() as f64
    }

    fn support(&self, i: usize) -> u32 {
        self.counts[i].iter().sum()
    }

    fn predicted(&self, i: usize) -> u32 {
        self.counts.iter().map(|row| row[i]).sum()
    }

    /// Per-class precision/recall/F1/support. Precision of a class never
    /// predicted is 0 by convention; same for recall of an empty class.
    pub fn per_class(&self) -> BTreeMap<String, ClassMetrics> {
        self.classes
            .iter()
            .enumerate()
            .map(|(i, class)| {
                let tp = f64::from(self.counts[i][i]);
                let support = self.support(i);
                let predicted = self.predicted(i);
                let precision = if predicted > 0 {
                    tp / f64::from(predicted)
                } else {
                    0.0
                };
                let recall = if support > 0 {
                    tp / f64::from(support)
                } else {
                    0.0
                };
                let f1 = if precision + recall > 0.0 {
                    2.0 * precision * recall / (precision + recall)
                } else {
                    0.0
                };
                (
                    class.clone(),
                    ClassMetrics {
                        precision,
                        recall,
                        f1,
                        support,
                    },
                )
            })
            .collect()
    }

    /// Unweighted mean F1 over classes that actually occur in the ground
    /// truth (support > 0).
    pub fn macro_f1(&self) -> f64 {
        let per_class = self.per_class();
        let with_support: Vec<f64> = per_class
            .values()
            .filter(|m| m.support > 0)
            .map(|m| m.f1)
            .collect();
        if with_support.is_empty() {
            return 0.0;
        }
        with_support.iter().sum::<f64>() / with_support.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub test_size: u32,
}

/// Aggregate evaluation result: pooled confusion over all test predictions
/// plus per-fold metrics where folding applies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub fold_metrics: Vec<FoldMetrics>,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_confusion(
        confusion: ConfusionMatrix,
        fold_metrics: Vec<FoldMetrics>,
        seed: u64,
    ) -> EvalReport {
        EvalReport {
            accuracy: confusion.accuracy(),
            macro_f1: confusion.macro_f1(),
            per_class: confusion.per_class(),
            confusion,
            fold_metrics,
            seed,
        }
    }
}
