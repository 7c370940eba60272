//! Runtime benchmarks: wall-clock cost of classifying traces with each
//! attack, measured on held-out traces of distinct apps.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{Dataset, Trace};

use super::{fit, AttackConfig, EvalError};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub attack: String,
    /// One-off training time, not part of the classification measurement.
    pub train_s: f64,
    /// Mean wall-clock seconds to classify the whole holdout batch.
    pub mean_s: f64,
    /// Sample standard deviation over repeats (0 for a single repeat).
    pub stddev_s: f64,
    /// stddev_s / mean_s.
    pub relative_stddev: f64,
    pub repeats: usize,
    pub n_train: usize,
    pub n_queries: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchmarkRow>,
    /// Protocol annotation for the dataset ("mixed" when heterogeneous).
    pub protocol: String,
    /// Resolver annotation for the dataset ("mixed" when heterogeneous).
    pub resolver: String,
    pub seed: u64,
}

fn annotation<'a>(values: impl Iterator<Item = &'a str>) -> String {
    let distinct: BTreeSet<&str> = values.collect();
    match distinct.len() {
        1 => (*distinct.iter().next().unwrap()).to_string(),
        _ => "mixed".to_string(),
    }
}

/// Times each attack on the same split: one trace each from `n_queries`
/// distinct apps is held out for classification, everything else trains the
/// model. Classification (including query feature extraction or sequence
/// construction) is timed over `repeats` runs; training is timed once and
/// reported separately. Attacks run sequentially so timings don't interfere.
pub fn benchmark(
    ds: &Dataset,
    attacks: &[AttackConfig],
    n_queries: usize,
    repeats: usize,
    seed: u64,
) -> Result<BenchmarkReport, EvalError> {
    assert!(repeats >= 1, "need at least one repeat");
    assert!(n_queries >= 1, "need at least one query");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Only apps that keep at least one training trace after the holdout are
    // eligible query sources.
    let mut eligible: Vec<&str> = ds
        .labels()
        .into_iter()
        .filter(|app| ds.indices_for(app).len() >= 2)
        .collect();
    if eligible.len() < n_queries {
        return Err(EvalError::InsufficientData(format!(
            "{n_queries} queries of distinct apps requested, only {} apps have \
             2+ traces",
            eligible.len()
        )));
    }
    eligible.shuffle(&mut rng);
    let holdout_apps: BTreeSet<&str> = eligible[..n_queries].iter().copied().collect();

    let mut held_out = Vec::with_capacity(n_queries); // trace positions
    for app in &holdout_apps {
        let indices = ds.indices_for(app);
        held_out.push(indices[rng.random_range(0..indices.len())]);
    }
    let held_out_set: BTreeSet<usize> = held_out.iter().copied().collect();
    let queries: Vec<Trace> = held_out.iter().map(|&i| ds.traces()[i].clone()).collect();
    let mut train_traces: Vec<Trace> = Vec::new();
    let mut train_labels: Vec<String> = Vec::new();
    for (i, t) in ds.traces().iter().enumerate() {
        if !held_out_set.contains(&i) {
            train_traces.push(t.clone());
            train_labels.push(t.app.clone());
        }
    }

    let mut rows = Vec::with_capacity(attacks.len());
    for cfg in attacks {
        let t0 = Instant::now();
        let model = fit(&train_traces, &train_labels, cfg)?;
        let train_s = t0.elapsed().as_secs_f64();

        let mut times = Vec::with_capacity(repeats);
        for _ in 0..repeats {
            let t0 = Instant::now();
            let preds = model.predict_batch(&queries)?;
            let elapsed = t0.elapsed().as_secs_f64();
            assert_eq!(preds.len(), queries.len());
            times.push(elapsed);
        }
        let mean_s = times.iter().sum::<f64>() / times.len() as f64;
        let stddev_s = if repeats > 1 {
            let var = times.iter().map(|t| (t - mean_s).powi(2)).sum::<f64>()
                / (repeats - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        rows.push(BenchmarkRow {
            attack: cfg.attack.name().to_string(),
            train_s,
            mean_s,
            stddev_s,
            relative_stddev: if mean_s > 0.0 { stddev_s / mean_s } else { 0.0 },
            repeats,
            n_train: train_traces.len(),
            n_queries,
        });
    }

    Ok(BenchmarkReport {
        rows,
        protocol: annotation(ds.traces().iter().map(|t| t.protocol.as_str())),
        resolver: annotation(ds.traces().iter().map(|t| t.resolver.as_str())),
        seed,
    })
}
