//! k-nearest-neighbor classification of DNS sequences under the
//! Damerau-Levenshtein distance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{dl_distance_scaled, CostSchedule, ScaledCosts};
use crate::features::DnsSequence;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KnnError {
    #[error("k = {k} exceeds the {refs} reference sequences")]
    KTooLarge { k: usize, refs: usize },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no reference sequences")]
    EmptyRefs,
}

/// A lazy-learning model: labeled reference sequences, a vote size, and the
/// cost schedule distances are computed under.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnnModel {
    refs: Vec<(DnsSequence, String)>,
    k: usize,
    costs: CostSchedule,
}

impl KnnModel {
    pub fn new(
        refs: Vec<(DnsSequence, String)>,
        k: usize,
        costs: CostSchedule,
    ) -> Result<Self, KnnError> {
        if refs.is_empty() {
            return Err(KnnError::EmptyRefs);
        }
        if k == 0 {
            return Err(KnnError::ZeroK);
        }
        if k > refs.len() {
            return Err(KnnError::KTooLarge { k, refs: refs.len() });
        }
        Ok(KnnModel { refs, k, costs })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn refs(&self) -> &[(DnsSequence, String)] {
        &self.refs
    }

    /// Distinct reference labels, sorted.
    pub fn classes(&self) -> Vec<&str> {
        let mut classes: Vec<&str> = self.refs.iter().map(|(_, l)| l.as_str()).collect();
        classes.sort();
        classes.dedup();
        classes
    }

    fn scaled(&self) -> ScaledCosts {
        self.costs.scaled().expect("cost schedule does not overflow")
    }

    /// The k nearest reference indices for a query, nearest first. Distances
    /// compare exactly (integer-scaled); equal distances break by reference
    /// index.
    fn nearest(&self, q: &DnsSequence, sc: &ScaledCosts) -> Vec<(u64, usize)> {
        let mut dist: Vec<(u64, usize)> = self
            .refs
            .iter()
            .enumerate()
            .map(|(i, (r, _))| (dl_distance_scaled(&q.tokens, &r.tokens, sc), i))
            .collect();
        dist.sort_unstable();
        dist.truncate(self.k);
        dist
    }

    /// Majority label among the k nearest references. Vote ties break by the
    /// smaller summed distance, then by label order.
    pub fn classify(&self, q: &DnsSequence) -> &str {
        let sc = self.scaled();
        self.classify_with(q, &sc)
    }

    fn classify_with(&self, q: &DnsSequence, sc: &ScaledCosts) -> &str {
        let nearest = self.nearest(q, sc);
        // (votes desc, summed distance asc, label asc)
        let mut tally: Vec<(&str, usize, u64)> = Vec::new();
        for &(d, i) in &nearest {
            let label = self.refs[i].1.as_str();
            match tally.iter_mut().find(|(l, _, _)| *l == label) {
                Some(entry) => {
                    entry.1 += 1;
                    entry.2 += d;
                }
                None => tally.push((label, 1, d)),
            }
        }
        tally
            .into_iter()
            .min_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(b.0)))
            .expect("k >= 1 yields at least one vote")
            .0
    }

    /// Batch classification, parallel over queries with order preserved.
    pub fn classify_batch(&self, queries: &[DnsSequence]) -> Vec<&str> {
        let sc = self.scaled();
        queries
            .par_iter()
            .map(|q| self.classify_with(q, &sc))
            .collect()
    }

    /// Vote fractions over `classes()` order: each of the k nearest
    /// references contributes 1/k to its label.
    pub fn vote_proba(&self, q: &DnsSequence) -> Vec<f64> {
        let classes = self.classes();
        let sc = self.scaled();
        let nearest = self.nearest(q, &sc);
        let mut proba = vec![0.0f64; classes.len()];
        for &(_, i) in &nearest {
            let label = self.refs[i].1.as_str();
            let pos = classes.binary_search(&label).expect("label is a class");
            proba[pos] += 1.0 / self.k as f64;
        }
        proba
    }
}
