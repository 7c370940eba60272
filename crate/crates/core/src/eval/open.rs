//! Open-world evaluation: monitored apps against a sea of unmonitored and
//! unknown apps, in binary (monitored-or-not) and multi-class form.

use std::collections::BTreeSet;
use std::io::Write;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::{Dataset, Trace};

use super::metrics::{ConfusionMatrix, EvalReport};
use super::{fit, AttackConfig, EvalError};

/// Training label and prediction class that aggregates all unmonitored and
/// unknown apps.
pub const AGGREGATE_CLASS: &str = "*other*";

/// Shape of the open-world experiment: how many apps play each role and how
/// many traces each contributes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenWorldSplit {
    pub monitored_apps: usize,
    pub monitored_train: usize,
    pub monitored_test: usize,
    pub unmonitored_apps: usize,
    pub unmonitored_train: usize,
    pub unknown_apps: usize,
    pub unknown_test: usize,
}

impl Default for OpenWorldSplit {
    /// 10 monitored apps (30 train / 10 test each), 100 unmonitored apps
    /// (3 train each), 100 unknown apps (12 test each).
    fn default() -> Self {
        OpenWorldSplit {
            monitored_apps: 10,
            monitored_train: 30,
            monitored_test: 10,
            unmonitored_apps: 100,
            unmonitored_train: 3,
            unknown_apps: 100,
            unknown_test: 12,
        }
    }
}

/// Which app labels are eligible for each role. Pools must be pairwise
/// disjoint; the monitored pool may exceed the split's count, in which case
/// each iteration samples a fresh monitored set from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePools {
    pub monitored: Vec<String>,
    pub unmonitored: Vec<String>,
    pub unknown: Vec<String>,
}

impl RolePools {
    /// Derives pools from a dataset's labels: a seeded shuffle assigns
    /// `unknown_apps` labels to unknown, `unmonitored_apps` to unmonitored,
    /// and everything left to the monitored pool.
    pub fn from_dataset(
        ds: &Dataset,
        split: &OpenWorldSplit,
        seed: u64,
    ) -> Result<RolePools, EvalError> {
        let mut labels: Vec<String> = ds.labels().into_iter().map(str::to_string).collect();
        let needed = split.unknown_apps + split.unmonitored_apps + split.monitored_apps;
        if labels.len() < needed {
            return Err(EvalError::InsufficientData(format!(
                "open-world split needs {needed} apps, dataset has {}",
                labels.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(u64::MAX); // role-assignment stream, distinct from iteration streams
        labels.shuffle(&mut rng);
        let unknown: Vec<String> = labels.drain(..split.unknown_apps).collect();
        let unmonitored: Vec<String> = labels.drain(..split.unmonitored_apps).collect();
        Ok(RolePools {
            monitored: labels,
            unmonitored,
            unknown,
        })
    }

    fn validate(&self, split: &OpenWorldSplit) -> Result<(), EvalError> {
        let m: BTreeSet<&String> = self.monitored.iter().collect();
        let u: BTreeSet<&String> = self.unmonitored.iter().collect();
        let k: BTreeSet<&String> = self.unknown.iter().collect();
        if m.intersection(&u).next().is_some()
            || m.intersection(&k).next().is_some()
            || u.intersection(&k).next().is_some()
        {
            return Err(EvalError::InsufficientData(
                "role pools must be pairwise disjoint".into(),
            ));
        }
        if self.monitored.contains(&AGGREGATE_CLASS.to_string()) {
            return Err(EvalError::InsufficientData(format!(
                "app label {AGGREGATE_CLASS:?} collides with the aggregate class"
            )));
        }
        for (pool, need, role) in [
            (&self.monitored, split.monitored_apps, "monitored"),
            (&self.unmonitored, split.unmonitored_apps, "unmonitored"),
            (&self.unknown, split.unknown_apps, "unknown"),
        ] {
            if pool.len() < need {
                return Err(EvalError::InsufficientData(format!(
                    "{role} pool has {} apps, split needs {need}",
                    pool.len()
                )));
            }
        }
        Ok(())
    }
}

/// Picks `count` trace positions of `app`, shuffled by `rng`.
fn sample_traces(
    ds: &Dataset,
    app: &str,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>, EvalError> {
    let mut indices: Vec<usize> = ds.indices_for(app).to_vec();
    if indices.len() < count {
        return Err(EvalError::ClassTooSmall {
            label: app.to_string(),
            have: indices.len(),
            need: count,
        });
    }
    indices.shuffle(rng);
    indices.truncate(count);
    Ok(indices)
}

/// Unmonitored training traces and unknown test traces — fixed across
/// iterations (only the monitored side is resampled).
struct FixedRoles {
    unmonitored_train: Vec<usize>,
    unknown_test: Vec<usize>,
}

fn fixed_roles(
    split: &OpenWorldSplit,
    pools: &RolePools,
    ds: &Dataset,
    seed: u64,
) -> Result<FixedRoles, EvalError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut unmonitored = pools.unmonitored.clone();
    unmonitored.shuffle(&mut rng);
    unmonitored.truncate(split.unmonitored_apps);
    unmonitored.sort();
    let mut unknown = pools.unknown.clone();
    unknown.shuffle(&mut rng);
    unknown.truncate(split.unknown_apps);
    unknown.sort();

    let mut unmonitored_train = Vec::new();
    for app in &unmonitored {
        unmonitored_train.extend(sample_traces(ds, app, split.unmonitored_train, &mut rng)?);
    }
    let mut unknown_test = Vec::new();
    for app in &unknown {
        unknown_test.extend(sample_traces(ds, app, split.unknown_test, &mut rng)?);
    }
    Ok(FixedRoles {
        unmonitored_train,
        unknown_test,
    })
}

/// One iteration's monitored side: sampled apps, their train and test trace
/// positions.
struct MonitoredSample {
    apps: Vec<String>,
    train: Vec<(usize, String)>,
    test: Vec<usize>,
}

fn monitored_sample(
    split: &OpenWorldSplit,
    pools: &RolePools,
    ds: &Dataset,
    rng: &mut ChaCha8Rng,
) -> Result<MonitoredSample, EvalError> {
    let mut apps = pools.monitored.clone();
    apps.shuffle(rng);
    apps.truncate(split.monitored_apps);
    apps.sort();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for app in &apps {
        let picked = sample_traces(
            ds,
            app,
            split.monitored_train + split.monitored_test,
            rng,
        )?;
        for &i in &picked[..split.monitored_train] {
            train.push((i, app.clone()));
        }
        test.extend(&picked[split.monitored_train..]);
    }
    Ok(MonitoredSample { apps, train, test })
}

/// Builds the training set for one iteration: monitored traces keep their
/// app labels, unmonitored traces are collapsed into the aggregate class.
fn training_set(
    ds: &Dataset,
    monitored: &MonitoredSample,
    fixed: &FixedRoles,
) -> (Vec<Trace>, Vec<String>) {
    let mut traces = Vec::with_capacity(monitored.train.len() + fixed.unmonitored_train.len());
    let mut labels = Vec::with_capacity(traces.capacity());
    for (i, app) in &monitored.train {
        traces.push(ds.traces()[*i].clone());
        labels.push(app.clone());
    }
    for &i in &fixed.unmonitored_train {
        traces.push(ds.traces()[i].clone());
        labels.push(AGGREGATE_CLASS.to_string());
    }
    (traces, labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision-recall curve over an increasing threshold grid; `best` is the
/// point with maximal F1 (ties to the lower threshold).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub best: PrPoint,
}

impl PrCurve {
    fn from_points(points: Vec<PrPoint>) -> PrCurve {
        assert!(!points.is_empty(), "a PR curve needs at least one point");
        debug_assert!(points.windows(2).all(|w| w[0].threshold < w[1].threshold));
        let best = *points
            .iter()
            .max_by(|a, b| {
                a.f1.partial_cmp(&b.f1)
                    .unwrap()
                    .then(b.threshold.partial_cmp(&a.threshold).unwrap())
            })
            .unwrap();
        PrCurve { points, best }
    }
}

/// The standard threshold grid: 0.00 to 1.00 in steps of 0.01.
pub fn default_thresholds() -> Vec<f64> {
    (0..=100).map(|i| f64::from(i) / 100.0).collect()
}

/// Writes a PR curve as CSV (threshold, precision, recall, f1).
pub fn write_pr_csv<W: Write>(w: W, curve: &PrCurve) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["threshold", "precision", "recall", "f1"])?;
    for p in &curve.points {
        wtr.write_record([
            format!("{:.2}", p.threshold),
            p.precision.to_string(),
            p.recall.to_string(),
            p.f1.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OpenWorldBinaryReport {
    /// Averaged attack curve over all iterations.
    pub curve: PrCurve,
    /// Analytic random-classifier curve at the same monitored fraction.
    pub baseline: PrCurve,
    pub iterations: usize,
    /// Fraction of test traces that are monitored.
    pub monitored_fraction: f64,
    pub seed: u64,
}

/// Monitored-or-not detection. Per iteration, a model is trained on the
/// monitored apps plus the aggregate class; a test trace is flagged
/// monitored iff its summed monitored-class probability exceeds the
/// threshold. Points where some iteration flags nothing are excluded.
pub fn open_world_binary(
    split: &OpenWorldSplit,
    pools: &RolePools,
    ds: &Dataset,
    cfg: &AttackConfig,
    thresholds: &[f64],
    iterations: usize,
    seed: u64,
) -> Result<OpenWorldBinaryReport, EvalError> {
    assert!(iterations >= 1, "need at least one iteration");
    assert!(
        thresholds.windows(2).all(|w| w[0] < w[1]) && !thresholds.is_empty(),
        "thresholds must be strictly increasing"
    );
    pools.validate(split)?;
    let fixed = fixed_roles(split, pools, ds, seed)?;

    // per_threshold[t][iteration] = Some((precision, recall)) when defined.
    let mut per_threshold: Vec<Vec<Option<(f64, f64)>>> =
        vec![Vec::with_capacity(iterations); thresholds.len()];
    for it in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(it as u64 + 1);
        let monitored = monitored_sample(split, pools, ds, &mut rng)?;
        let (train_traces, train_labels) = training_set(ds, &monitored, &fixed);
        let model = fit(&train_traces, &train_labels, cfg)?;
        let classes = model.classes();
        let aggregate_pos = classes.iter().position(|c| c.as_str() == AGGREGATE_CLASS);

        // Scores: summed monitored-class probability per test trace, with
        // ground truth (true = monitored).
        let mut scored: Vec<(f64, bool)> = Vec::new();
        for &i in &monitored.test {
            let proba = model.predict_proba(&ds.traces()[i])?;
            scored.push((monitored_score(&proba, aggregate_pos), true));
        }
        for &i in &fixed.unknown_test {
            let proba = model.predict_proba(&ds.traces()[i])?;
            scored.push((monitored_score(&proba, aggregate_pos), false));
        }

        for (ti, &t) in thresholds.iter().enumerate() {
            let mut tp = 0u32;
            let mut fp = 0u32;
            let mut fn_ = 0u32;
            for &(score, is_monitored) in &scored {
                let flagged = score > t;
                match (flagged, is_monitored) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            per_threshold[ti].push(if tp + fp == 0 {
                None
            } else {
                let precision = f64::from(tp) / f64::from(tp + fp);
                let recall = f64::from(tp) / f64::from(tp + fn_);
                Some((precision, recall))
            });
        }
    }

    let mut points = Vec::new();
    for (ti, &t) in thresholds.iter().enumerate() {
        let stats = &per_threshold[ti];
        if stats.iter().any(Option::is_none) {
            continue; // at least one iteration predicted nothing at this threshold
        }
        let n = stats.len() as f64;
        let precision = stats.iter().map(|s| s.unwrap().0).sum::<f64>() / n;
        let recall = stats.iter().map(|s| s.unwrap().1).sum::<f64>() / n;
        points.push(PrPoint {
            threshold: t,
            precision,
            recall,
            f1: f1_of(precision, recall),
        });
    }
    if points.is_empty() {
        return Err(EvalError::InsufficientData(
            "no threshold produced predictions in every iteration".into(),
        ));
    }
    let curve = PrCurve::from_points(points);

    let n_test = split.monitored_apps * split.monitored_test
        + split.unknown_apps * split.unknown_test;
    let monitored_fraction =
        (split.monitored_apps * split.monitored_test) as f64 / n_test as f64;
    let baseline = baseline_curve(monitored_fraction, &curve);

    Ok(OpenWorldBinaryReport {
        curve,
        baseline,
        iterations,
        monitored_fraction,
        seed,
    })
}

fn monitored_score(proba: &[f64], aggregate_pos: Option<usize>) -> f64 {
    proba
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != aggregate_pos)
        .map(|(_, &p)| p)
        .sum()
}

fn f1_of(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// A classifier scoring uniformly at random flags a test trace at threshold
/// t with probability 1 - t; its expected precision is the monitored
/// fraction pi and its recall is 1 - t.
fn baseline_curve(pi: f64, attack_curve: &PrCurve) -> PrCurve {
    let points = attack_curve
        .points
        .iter()
        .map(|p| {
            let recall = 1.0 - p.threshold;
            PrPoint {
                threshold: p.threshold,
                precision: pi,
                recall,
                f1: f1_of(pi, recall),
            }
        })
        .collect();
    PrCurve::from_points(points)
}

/// Multi-class open world: monitored apps are individual classes, everything
/// else is the aggregate class; unknown-app test traces belong to the
/// aggregate. Macro-F1 is the headline number.
pub fn open_world_multiclass(
    split: &OpenWorldSplit,
    pools: &RolePools,
    ds: &Dataset,
    cfg: &AttackConfig,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    pools.validate(split)?;
    let fixed = fixed_roles(split, pools, ds, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let monitored = monitored_sample(split, pools, ds, &mut rng)?;
    let (train_traces, train_labels) = training_set(ds, &monitored, &fixed);
    let model = fit(&train_traces, &train_labels, cfg)?;

    let mut test_traces: Vec<Trace> = Vec::new();
    let mut truths: Vec<String> = Vec::new();
    for &i in &monitored.test {
        test_traces.push(ds.traces()[i].clone());
        truths.push(ds.traces()[i].app.clone());
    }
    for &i in &fixed.unknown_test {
        test_traces.push(ds.traces()[i].clone());
        truths.push(AGGREGATE_CLASS.to_string());
    }
    let preds = model.predict_batch(&test_traces)?;
    let pairs: Vec<(String, String)> = truths.into_iter().zip(preds).collect();

    let mut classes = monitored.apps.clone();
    classes.push(AGGREGATE_CLASS.to_string());
    classes.sort();
    let confusion = ConfusionMatrix::from_pairs(classes, &pairs);
    Ok(EvalReport::from_confusion(confusion, Vec::new(), seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::Attack;
    use crate::synth::{generate_dataset, SynthConfig};

    fn small_split() -> OpenWorldSplit {
        OpenWorldSplit {
            monitored_apps: 4,
            monitored_train: 6,
            monitored_test: 3,
            unmonitored_apps: 8,
            unmonitored_train: 2,
            unknown_apps: 8,
            unknown_test: 3,
        }
    }

    fn small_world() -> (Dataset, OpenWorldSplit, RolePools) {
        let ds = generate_dataset(&SynthConfig::new(22, 9, 40));
        let split = small_split();
        let pools = RolePools::from_dataset(&ds, &split, 40).unwrap();
        (ds, split, pools)
    }

    #[test]
    fn pools_cover_roles_disjointly() {
        let (_, split, pools) = small_world();
        pools.validate(&split).unwrap();
        assert_eq!(pools.unknown.len(), 8);
        assert_eq!(pools.unmonitored.len(), 8);
        assert_eq!(pools.monitored.len(), 22 - 16);
    }

    #[test]
    fn binary_curve_on_separable_data() {
        let (ds, split, pools) = small_world();
        let cfg = AttackConfig::new(Attack::Segram, 40);
        let report = open_world_binary(
            &split,
            &pools,
            &ds,
            &cfg,
            &default_thresholds(),
            2,
            40,
        )
        .unwrap();
        // Threshold 0 flags everything that has any monitored mass; on
        // separable data every monitored trace does.
        let first = &report.curve.points[0];
        assert_eq!(first.threshold, 0.0);
        assert!((first.recall - 1.0).abs() < 1e-12);
        // The empty-prediction end of the grid is excluded.
        assert!(report.curve.points.last().unwrap().threshold < 1.0);
        assert!(
            report.curve.best.f1 >= 0.9,
            "best f1 was {}",
            report.curve.best.f1
        );
        // Baseline: precision pinned at the monitored fraction.
        let pi = report.monitored_fraction;
        assert!((pi - 12.0 / 36.0).abs() < 1e-12);
        for p in &report.baseline.points {
            assert!((p.precision - pi).abs() < 1e-12);
            assert!((p.recall - (1.0 - p.threshold)).abs() < 1e-12);
        }
        let max_baseline = 2.0 * pi / (1.0 + pi);
        assert!(report.baseline.best.f1 <= max_baseline + 1e-9);
    }

    #[test]
    fn binary_is_deterministic() {
        let (ds, split, pools) = small_world();
        let cfg = AttackConfig::new(Attack::FreqDist, 40);
        let run = || {
            open_world_binary(&split, &pools, &ds, &cfg, &default_thresholds(), 2, 40).unwrap()
        };
        assert_eq!(
            serde_json::to_string(&run()).unwrap(),
            serde_json::to_string(&run()).unwrap()
        );
    }

    #[test]
    fn multiclass_on_separable_data() {
        let (ds, split, pools) = small_world();
        let cfg = AttackConfig::new(Attack::Segram, 40);
        let report = open_world_multiclass(&split, &pools, &ds, &cfg, 40).unwrap();
        assert!(
            report.macro_f1 >= 0.9,
            "macro f1 was {}",
            report.macro_f1
        );
        let aggregate = &report.per_class[AGGREGATE_CLASS];
        assert!(aggregate.recall >= 0.9);
        assert_eq!(
            report.confusion.classes.len(),
            split.monitored_apps + 1
        );
        // Test size: monitored tests + unknown tests.
        assert_eq!(
            report.confusion.total(),
            (split.monitored_apps * split.monitored_test
                + split.unknown_apps * split.unknown_test) as u64
        );
    }

    #[test]
    fn overlapping_pools_rejected() {
        let (ds, split, mut pools) = small_world();
        pools.unknown[0] = pools.monitored[0].clone();
        let cfg = AttackConfig::new(Attack::FreqDist, 1);
        assert!(matches!(
            open_world_multiclass(&split, &pools, &ds, &cfg, 1),
            Err(EvalError::InsufficientData(_))
        ));
    }

    #[test]
    fn table_shaped_training_set_size() {
        // The canonical split: 10x30 monitored + 100x3 unmonitored = 600
        // training traces.
        let split = OpenWorldSplit::default();
        let ds = generate_dataset(&SynthConfig::new(210, 40, 2));
        let pools = RolePools::from_dataset(&ds, &split, 2).unwrap();
        let fixed = fixed_roles(&split, &pools, &ds, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        rng.set_stream(1);
        let monitored = monitored_sample(&split, &pools, &ds, &mut rng).unwrap();
        let (train, _) = training_set(&ds, &monitored, &fixed);
        assert_eq!(train.len(), 10 * 30 + 100 * 3);
        assert_eq!(
            monitored.test.len() + fixed.unknown_test.len(),
            10 * 10 + 100 * 12
        );
    }
}
