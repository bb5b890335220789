//! Training loop, binary cross entropy, consistent-class metrics, and the
//! multi-run evaluation protocol.

use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{concat, Adam, Tape, Tensor};
use crate::models::{
    decide_distance, fit_distance_threshold, Arch, Model, ModelConfig, ModelError,
    PreparedExample, ThresholdError,
};
use crate::scalar::Real;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("architecture {0} has no trainable parameters; fit its threshold instead")]
    NotTrainable(Arch),
    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("non-finite loss at epoch {epoch}, batch of examples {batch:?}")]
    NonFiniteLoss { epoch: usize, batch: Vec<usize> },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
    #[error("cannot write training log: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    LogFormat(#[from] serde_json::Error),
}

/// Everything one `train` call needs besides the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub step_size: f64,
    pub epochs: usize,
    pub seed: u64,
    /// epochs without a dev F1 improvement before stopping
    pub patience: usize,
}

impl TrainConfig {
    pub fn new(model: ModelConfig, epochs: usize, seed: u64) -> Self {
        TrainConfig {
            model,
            batch_size: 10,
            step_size: 1e-4,
            epochs,
            seed,
            patience: 10,
        }
    }
}

/// Consistent-class precision, recall and F1 as percentages.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

/// Compute metrics from (predicted, actual) pairs; positive = consistent.
pub fn metrics_from_pairs(pairs: &[(bool, bool)]) -> Metrics {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut correct = 0usize;
    for &(pred, label) in pairs {
        if pred == label {
            correct += 1;
        }
        match (pred, label) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    let pct = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            100.0 * num as f64 / den as f64
        }
    };
    Metrics {
        precision: pct(tp, tp + fp),
        recall: pct(tp, tp + fn_),
        f1: pct(2 * tp, 2 * tp + fp + fn_),
        accuracy: pct(correct, pairs.len()),
    }
}

const CLAMP_LO: f64 = 1e-7;

/// −[y ln p + (1−y) ln(1−p)] with p clamped into [1e-7, 1−1e-7].
pub fn bce_loss<S: Real>(tape: &Tape<S>, p: &Tensor<S>, consistent: bool) -> Result<Tensor<S>, ModelError> {
    let clamped = p.clamp(S::of(CLAMP_LO), S::of(1.0 - CLAMP_LO));
    let inner = if consistent {
        clamped
    } else {
        tape.scalar(S::one()).sub(&clamped)?
    };
    Ok(inner.ln().scale(-S::one()))
}

/// One line of the per-epoch training log.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_precision: f64,
    pub dev_recall: f64,
    pub dev_f1: f64,
}

pub fn write_log(log: &[EpochLog], path: &Path) -> Result<(), TrainError> {
    let mut out = std::fs::File::create(path)?;
    for line in log {
        serde_json::to_writer(&mut out, line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub struct TrainOutcome<S: Real> {
    pub model: Model<S>,
    pub log: Vec<EpochLog>,
    /// epoch whose dev F1 was best; the returned model carries its weights
    pub best_epoch: usize,
    pub best_dev_f1: f64,
}

/// Deterministic eval over a split: forward at the 0.5 cutoff.
pub fn evaluate<S: Real>(model: &Model<S>, examples: &[PreparedExample<S>]) -> Result<Metrics, ModelError> {
    let pairs: Vec<(bool, bool)> = examples
        .iter()
        .map(|ex| Ok((model.predict(ex)?, ex.consistent)))
        .collect::<Result<_, ModelError>>()?;
    Ok(metrics_from_pairs(&pairs))
}

fn centroid_distances<S: Real>(examples: &[PreparedExample<S>]) -> Result<Vec<(S, bool)>, ThresholdError> {
    examples
        .iter()
        .map(|ex| {
            Ok((
                crate::models::euclidean_distance(&ex.text_centroid, &ex.graph_centroid)?,
                ex.consistent,
            ))
        })
        .collect()
}

/// The vector-distance baseline: fit the threshold on one split, score
/// another.
pub fn fit_and_evaluate_distance<S: Real>(
    train: &[PreparedExample<S>],
    eval: &[PreparedExample<S>],
) -> Result<(S, Metrics), TrainError> {
    let threshold = fit_distance_threshold(&centroid_distances(train)?)?;
    let metrics = evaluate_distance(threshold, eval)?;
    Ok((threshold, metrics))
}

pub fn evaluate_distance<S: Real>(
    threshold: S,
    examples: &[PreparedExample<S>],
) -> Result<Metrics, TrainError> {
    let pairs: Vec<(bool, bool)> = examples
        .iter()
        .map(|ex| {
            Ok((
                decide_distance(&ex.text_centroid, &ex.graph_centroid, threshold)?,
                ex.consistent,
            ))
        })
        .collect::<Result<_, ThresholdError>>()?;
    Ok(metrics_from_pairs(&pairs))
}

fn snapshot<S: Real>(model: &Model<S>) -> Vec<(String, Vec<S>)> {
    model
        .params
        .iter()
        .map(|(name, p)| (name.clone(), p.values()))
        .collect()
}

fn restore<S: Real>(model: &Model<S>, saved: &[(String, Vec<S>)]) {
    for (name, values) in saved {
        model
            .params
            .get(name)
            .expect("snapshot matches model")
            .set_values(values.clone());
    }
}

/// Train one model. Single-threaded and bit-reproducible for a given
/// (config, data); the returned model carries the best-dev-F1 weights.
pub fn train<S: Real>(
    config: &TrainConfig,
    train_set: &[PreparedExample<S>],
    dev_set: &[PreparedExample<S>],
) -> Result<TrainOutcome<S>, TrainError> {
    if !config.model.arch.is_trainable() {
        return Err(TrainError::NotTrainable(config.model.arch));
    }
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrainSet);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model: Model<S> = Model::new(config.model.clone(), &mut rng);
    let mut optimizer: Adam<S> = Adam::new(S::of(config.step_size));

    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<(String, Vec<S>)>)> = None;
    let mut since_best = 0usize;

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let tape: Tape<S> = Tape::new();
            let losses: Vec<Tensor<S>> = batch
                .iter()
                .map(|&i| {
                    let ex = &train_set[i];
                    let p = model.forward(&tape, ex, Some(&mut rng))?;
                    bce_loss(&tape, &p, ex.consistent)
                })
                .collect::<Result<_, ModelError>>()?;
            let batch_loss = concat(&losses)
                .and_then(|t| t.reduce_mean(0))
                .map_err(ModelError::from)?;
            let value = batch_loss.item().to_f64_lossy();
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch.to_vec(),
                });
            }
            loss_sum += value * batch.len() as f64;
            batch_loss.backward().map_err(ModelError::from)?;
            optimizer.step(&model.params);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let dev = evaluate(&model, dev_set)?;
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_precision: dev.precision,
            dev_recall: dev.recall,
            dev_f1: dev.f1,
        });
        if best.as_ref().is_none_or(|(_, f1, _)| dev.f1 > *f1) {
            best = Some((epoch, dev.f1, snapshot(&model)));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    let (best_epoch, best_dev_f1, saved) = best.expect("at least one epoch");
    restore(&model, &saved);
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
        best_dev_f1,
    })
}

/// Aggregate of several independently seeded runs of one architecture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub arch: Arch,
    pub runs: usize,
    pub dev: Metrics,
    pub test: Metrics,
    /// max - min test F1 across runs
    pub spread_f1: f64,
    /// midpoint-of-spread error convention
    pub error_estimate: f64,
    pub per_run_test_f1: Vec<f64>,
}

fn mean_metrics(all: &[Metrics]) -> Metrics {
    let n = all.len() as f64;
    Metrics {
        precision: all.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: all.iter().map(|m| m.recall).sum::<f64>() / n,
        f1: all.iter().map(|m| m.f1).sum::<f64>() / n,
        accuracy: all.iter().map(|m| m.accuracy).sum::<f64>() / n,
    }
}

/// Train `runs` times with derived seeds (seed + run index) and average.
pub fn multi_run<S: Real>(
    config: &TrainConfig,
    train_set: &[PreparedExample<S>],
    dev_set: &[PreparedExample<S>],
    test_set: &[PreparedExample<S>],
    runs: usize,
) -> Result<EvalReport, TrainError> {
    assert!(runs >= 1, "multi_run needs at least one run");
    let mut dev_all = Vec::with_capacity(runs);
    let mut test_all = Vec::with_capacity(runs);
    for run in 0..runs {
        let mut cfg = config.clone();
        cfg.seed = config.seed + run as u64;
        let (dev, test) = if config.model.arch.is_trainable() {
            let outcome = train(&cfg, train_set, dev_set)?;
            (
                evaluate(&outcome.model, dev_set)?,
                evaluate(&outcome.model, test_set)?,
            )
        } else {
            let (threshold, dev) = fit_and_evaluate_distance(train_set, dev_set)?;
            (dev, evaluate_distance(threshold, test_set)?)
        };
        dev_all.push(dev);
        test_all.push(test);
    }
    let f1s: Vec<f64> = test_all.iter().map(|m| m.f1).collect();
    let max = f1s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = f1s.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = max - min;
    Ok(EvalReport {
        arch: config.model.arch,
        runs,
        dev: mean_metrics(&dev_all),
        test: mean_metrics(&test_all),
        spread_f1: spread,
        error_estimate: spread / 2.0,
        per_run_test_f1: f1s,
    })
}
