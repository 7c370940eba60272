//! Random-forest classifier over sparse count vectors: bagged trees with
//! axis-aligned threshold splits grown greedily on Gini impurity.
//!
//! Everything is deterministic for a fixed seed: each tree draws from its own
//! counter-based RNG stream, split quality is compared in exact integer
//! arithmetic, and probability averaging runs in fixed tree order.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureVector;

/// Training hyperparameters. Textbook defaults: 100 trees, unbounded depth,
/// single-sample leaves, sqrt feature subsampling.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Candidate features per split; `None` means `floor(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl ForestParams {
    pub fn with_seed(seed: u64) -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            seed,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ForestError {
    #[error("training needs at least 2 samples and 2 distinct classes")]
    DegenerateTraining,
    #[error("got {x} vectors but {y} labels")]
    LengthMismatch { x: usize, y: usize },
    #[error("feature position {position} is outside the model's vocabulary of {n_features}")]
    VocabularyMismatch { position: u32, n_features: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf {
        /// Class-count histogram of the training samples that reached here.
        counts: Vec<u32>,
    },
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn leaf_counts(&self, x: &FeatureVector) -> &[u32] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if f64::from(x.get(*feature)) <= *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
            }
        }
    }
}

/// A trained forest; `classes` is sorted lexicographically and indexes every
/// leaf histogram.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestModel {
    pub classes: Vec<String>,
    n_features: u32,
    trees: Vec<Tree>,
}

struct TrainData<'a> {
    x: &'a [FeatureVector],
    y: Vec<u32>,
    n_classes: usize,
    n_features: u32,
    candidates_per_split: usize,
    min_samples_leaf: usize,
    max_depth: Option<usize>,
}

/// Trains a forest on sparse vectors drawn from a vocabulary of `n_features`
/// positions. Deterministic for fixed inputs, params, and seed.
pub fn train_forest(
    x: &[FeatureVector],
    y: &[String],
    n_features: usize,
    params: &ForestParams,
) -> Result<ForestModel, ForestError> {
    if x.len() != y.len() {
        return Err(ForestError::LengthMismatch {
            x: x.len(),
            y: y.len(),
        });
    }
    let mut classes: Vec<String> = y.to_vec();
    classes.sort();
    classes.dedup();
    if x.len() < 2 || classes.len() < 2 {
        return Err(ForestError::DegenerateTraining);
    }
    let n_features = n_features as u32;
    for v in x {
        if let Some(&(p, _)) = v.counts().iter().find(|&&(p, _)| p >= n_features) {
            return Err(ForestError::VocabularyMismatch {
                position: p,
                n_features,
            });
        }
    }
    let class_of = |label: &String| classes.binary_search(label).unwrap() as u32;
    let data = TrainData {
        x,
        y: y.iter().map(class_of).collect(),
        n_classes: classes.len(),
        n_features,
        candidates_per_split: params
            .features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().floor() as usize)
            .clamp(1, n_features as usize),
        min_samples_leaf: params.min_samples_leaf.max(1),
        max_depth: params.max_depth,
    };
    // One independent, replayable RNG stream per tree: parallel training
    // yields the same forest as sequential.
    let trees: Vec<Tree> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(t as u64 + 1);
            train_tree(&data, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        classes,
        n_features,
        trees,
    })
}

fn train_tree(data: &TrainData<'_>, rng: &mut ChaCha8Rng) -> Tree {
    let n = data.x.len();
    let samples: Vec<u32> = (0..n).map(|_| rng.random_range(0..n) as u32).collect();
    let mut tree = Tree { nodes: Vec::new() };
    grow(data, samples, 0, &mut tree, rng);
    tree
}

fn histogram(data: &TrainData<'_>, samples: &[u32]) -> Vec<u32> {
    let mut counts = vec![0u32; data.n_classes];
    for &s in samples {
        counts[data.y[s as usize] as usize] += 1;
    }
    counts
}

/// Appends the subtree for `samples` and returns its root node index.
fn grow(
    data: &TrainData<'_>,
    samples: Vec<u32>,
    depth: usize,
    tree: &mut Tree,
    rng: &mut ChaCha8Rng,
) -> u32 {
    let counts = histogram(data, &samples);
    let node_is_pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
    let too_small = samples.len() < 2 * data.min_samples_leaf;
    let too_deep = data.max_depth.is_some_and(|d| depth >= d);
    let split = if node_is_pure || too_small || too_deep {
        None
    } else {
        best_split(data, &samples, rng)
    };
    match split {
        None => {
            tree.nodes.push(Node::Leaf { counts });
            (tree.nodes.len() - 1) as u32
        }
        Some((feature, threshold)) => {
            let (mut left, mut right) = (Vec::new(), Vec::new());
            for &s in &samples {
                if f64::from(data.x[s as usize].get(feature)) <= threshold {
                    left.push(s);
                } else {
                    right.push(s);
                }
            }
            let at = tree.nodes.len() as u32;
            tree.nodes.push(Node::Split {
                feature,
                threshold,
                left: 0,
                right: 0,
            });
            let l = grow(data, left, depth + 1, tree, rng);
            let r = grow(data, right, depth + 1, tree, rng);
            match &mut tree.nodes[at as usize] {
                Node::Split { left, right, .. } => {
                    *left = l;
                    *right = r;
                }
                Node::Leaf { .. } => unreachable!(),
            }
            at
        }
    }
}

/// Split quality, compared exactly. Minimizing weighted Gini impurity is
/// equivalent to maximizing `sum_l^2/n_l + sum_r^2/n_r`, a rational whose
/// comparison cross-multiplies in u128.
#[derive(Clone, Copy, PartialEq, Eq)]
struct SplitScore {
    // score = (a * nr + b * nl) / (nl * nr), where a = sum of squared left
    // class counts, b = same on the right.
    numer: u128,
    denom: u128,
}

impl SplitScore {
    fn better_than(self, other: SplitScore) -> bool {
        self.numer * other.denom > other.numer * self.denom
    }
}

fn best_split(
    data: &TrainData<'_>,
    samples: &[u32],
    rng: &mut ChaCha8Rng,
) -> Option<(u32, f64)> {
    let mut seen = std::collections::HashSet::new();
    let mut candidates = Vec::with_capacity(data.candidates_per_split);
    while candidates.len() < data.candidates_per_split {
        let f = rng.random_range(0..data.n_features);
        if seen.insert(f) {
            candidates.push(f);
        }
    }

    let min_leaf = data.min_samples_leaf;
    let mut best: Option<(SplitScore, u32, f64)> = None;
    let mut pairs: Vec<(u32, u32)> = Vec::with_capacity(samples.len());
    for &feature in &candidates {
        pairs.clear();
        pairs.extend(
            samples
                .iter()
                .map(|&s| (data.x[s as usize].get(feature), data.y[s as usize])),
        );
        pairs.sort_unstable();
        if pairs[0].0 == pairs[pairs.len() - 1].0 {
            continue; // constant feature on this node
        }
        let mut right = vec![0u64; data.n_classes];
        for &(_, c) in pairs.iter() {
            right[c as usize] += 1;
        }
        let mut left = vec![0u64; data.n_classes];
        let mut sum_sq_left: u64 = 0;
        let mut sum_sq_right: u64 = right.iter().map(|&c| c * c).sum();
        let total = pairs.len() as u64;
        for i in 0..pairs.len() - 1 {
            let (value, class) = pairs[i];
            let c = class as usize;
            sum_sq_left += 2 * left[c] + 1;
            left[c] += 1;
            sum_sq_right -= 2 * right[c] - 1;
            right[c] -= 1;
            let nl = (i + 1) as u64;
            let nr = total - nl;
            if pairs[i + 1].0 == value {
                continue; // not a boundary between distinct values
            }
            if (nl as usize) < min_leaf || (nr as usize) < min_leaf {
                continue;
            }
            let score = SplitScore {
                numer: u128::from(sum_sq_left) * u128::from(nr)
                    + u128::from(sum_sq_right) * u128::from(nl),
                denom: u128::from(nl) * u128::from(nr),
            };
            // Strict improvement only: ties keep the earlier candidate and
            // the lower threshold, independent of iteration quirks.
            if best.is_none() || score.better_than(best.unwrap().0) {
                let threshold = (f64::from(value) + f64::from(pairs[i + 1].0)) / 2.0;
                best = Some((score, feature, threshold));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

impl ForestModel {
    fn check_vector(&self, x: &FeatureVector) -> Result<(), ForestError> {
        if let Some(&(p, _)) = x.counts().iter().find(|&&(p, _)| p >= self.n_features) {
            return Err(ForestError::VocabularyMismatch {
                position: p,
                n_features: self.n_features,
            });
        }
        Ok(())
    }

    /// Mean of per-tree leaf distributions, in `classes` order. Entries are
    /// non-negative and sum to 1 (within float error).
    pub fn predict_proba(&self, x: &FeatureVector) -> Result<Vec<f64>, ForestError> {
        self.check_vector(x)?;
        let mut acc = vec![0.0f64; self.classes.len()];
        for tree in &self.trees {
            let counts = tree.leaf_counts(x);
            let total: u32 = counts.iter().sum();
            for (a, &c) in acc.iter_mut().zip(counts) {
                *a += f64::from(c) / f64::from(total);
            }
        }
        let n = self.trees.len() as f64;
        for a in &mut acc {
            *a /= n;
        }
        Ok(acc)
    }

    /// Argmax class; probability ties go to the lexicographically first
    /// class.
    pub fn predict(&self, x: &FeatureVector) -> Result<&str, ForestError> {
        let proba = self.predict_proba(x)?;
        let mut best = 0usize;
        for (i, &p) in proba.iter().enumerate().skip(1) {
            if p > proba[best] {
                best = i;
            }
        }
        Ok(&self.classes[best])
    }

    /// Batch prediction, parallel over inputs with order preserved.
    pub fn predict_batch(&self, xs: &[FeatureVector]) -> Result<Vec<&str>, ForestError> {
        xs.par_iter().map(|x| self.predict(x)).collect()
    }

    pub fn n_features(&self) -> u32 {
        self.n_features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }
}
