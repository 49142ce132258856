//! Cross-entropy training with Adam or SGD and the multi-seed experiment loop.

mod optim;

pub use optim::{adam_step, AdamState, Optimizer, OptimizerState};

use log::{info, warn};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::time::Instant;

use crate::backend::{mix_seed, Executor};
use crate::data::{Dataset, Split};
use crate::error::{dims, invalid, Error, Result};
use crate::model::{Checkpoint, Classifier, Gradient, Model, ModelSpec, Prepared};

/// Probabilities are clamped to this floor before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;
/// Runs whose loss exceeds this value are aborted.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// −ln max(p_label, 1e-12).
pub fn cross_entropy(probabilities: &[f64], label: usize) -> Result<f64> {
    let p = probabilities.get(label).ok_or_else(|| {
        invalid(format!(
            "label {label} out of range for {} classes",
            probabilities.len()
        ))
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Mini-batch size; 0 means full batch.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub executor: Executor,
    /// Reshuffle the training set every epoch.
    #[serde(default = "default_true")]
    pub shuffle: bool,
    /// Record elapsed time; disable for byte-identical metrics.
    #[serde(default = "default_true")]
    pub wall_time: bool,
}

fn default_lr() -> f64 {
    0.001
}
fn default_epochs() -> usize {
    20
}
fn default_batch() -> usize {
    DEFAULT_BATCH_SIZE
}
fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}
fn default_true() -> bool {
    true
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            seeds: default_seeds(),
            optimizer: Optimizer::default(),
            executor: Executor::exact(),
            shuffle: true,
            wall_time: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.seeds.is_empty() {
            return Err(invalid("at least one seed is required"));
        }
        self.optimizer.validate()?;
        self.executor.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub split: Split,
    pub seed: u64,
    pub loss: f64,
    pub accuracy: f64,
    pub wall_time_ms: u64,
}

pub const METRICS_HEADER: &str = "epoch,split,seed,loss,accuracy,wall_time_ms";

/// Writes metrics CSV; `preamble` lines are emitted first as `# ` comments.
pub fn write_metrics_csv<W: Write>(
    records: &[MetricsRecord],
    preamble: &[String],
    mut out: W,
) -> Result<()> {
    for line in preamble {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.epoch, r.split, r.seed, r.loss, r.accuracy, r.wall_time_ms
        )?;
    }
    Ok(())
}

/// Mean loss and accuracy over a dataset.
pub fn evaluate(
    model: &dyn Classifier,
    prep: &Prepared,
    data: &Dataset,
    exec: &Executor,
    stream: u64,
) -> Result<(f64, f64)> {
    let per: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let out = model.output(prep, data.row(i), exec, mix_seed(stream, i as u64))?;
            let label = data.labels()[i];
            Ok((
                cross_entropy(out.probabilities.as_slice(), label)?,
                out.predicted_class() == label,
            ))
        })
        .collect::<Result<_>>()?;
    let n = per.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    Ok((loss, acc))
}

/// Mean cross-entropy over `indices` and its gradient.
pub fn loss_and_gradient(
    model: &dyn Classifier,
    prep: &Prepared,
    data: &Dataset,
    indices: &[usize],
    exec: &Executor,
    stream: u64,
) -> Result<(f64, Gradient)> {
    if indices.is_empty() {
        return Err(invalid("empty batch"));
    }
    let scale = 1.0 / indices.len() as f64;
    let outs: Vec<(f64, DVector<f64>)> = indices
        .par_iter()
        .map(|&i| {
            let out = model.output(prep, data.row(i), exec, mix_seed(stream, i as u64))?;
            let label = data.labels()[i];
            let loss = cross_entropy(out.probabilities.as_slice(), label)?;
            let mut delta = out.probabilities;
            delta[label] -= 1.0;
            Ok((loss, delta * scale))
        })
        .collect::<Result<_>>()?;
    let loss = outs.iter().map(|o| o.0).sum::<f64>() * scale;
    let xs: Vec<&[f64]> = indices.iter().map(|&i| data.row(i)).collect();
    let upstream: Vec<DVector<f64>> = outs.into_iter().map(|o| o.1).collect();
    let grad = model.backward(prep, &xs, &upstream, exec, mix_seed(stream, u64::MAX))?;
    Ok((loss, grad))
}

/// One optimizer step on `indices`; weights are regenerated first.
pub fn train_step(
    model: &mut dyn Classifier,
    opt: &mut OptimizerState,
    data: &Dataset,
    indices: &[usize],
    lr: f64,
    exec: &Executor,
    stream: u64,
) -> Result<f64> {
    let prep = model.prepare(exec, stream)?;
    let (loss, grad) = loss_and_gradient(model, &prep, data, indices, exec, stream)?;
    if !loss.is_finite() || !grad.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} or its gradient")));
    }
    opt.step(model, &grad, lr)?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub epoch: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct SeedRun {
    pub seed: u64,
    pub records: Vec<MetricsRecord>,
    pub model: Model,
    pub failure: Option<SeedFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epoch: usize,
    pub split: Split,
    pub runs: usize,
    pub loss_mean: f64,
    pub loss_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Per-(epoch, split) aggregates over runs that completed without failure.
pub fn summarize(runs: &[SeedRun]) -> Vec<SummaryRow> {
    let ok: Vec<&SeedRun> = runs.iter().filter(|r| r.failure.is_none()).collect();
    let mut keys: Vec<(usize, Split)> = ok
        .iter()
        .flat_map(|r| r.records.iter().map(|m| (m.epoch, m.split)))
        .collect();
    keys.sort_by_key(|&(e, s)| (e, s == Split::Test));
    keys.dedup();
    keys.into_iter()
        .map(|(epoch, split)| {
            let recs: Vec<&MetricsRecord> = ok
                .iter()
                .flat_map(|r| r.records.iter())
                .filter(|m| m.epoch == epoch && m.split == split)
                .collect();
            let (loss_mean, loss_std) = mean_std(&recs.iter().map(|m| m.loss).collect::<Vec<_>>());
            let (accuracy_mean, accuracy_std) =
                mean_std(&recs.iter().map(|m| m.accuracy).collect::<Vec<_>>());
            SummaryRow {
                epoch,
                split,
                runs: recs.len(),
                loss_mean,
                loss_std,
                accuracy_mean,
                accuracy_std,
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub runs: Vec<SeedRun>,
    pub summary: Vec<SummaryRow>,
}

impl FitResult {
    pub fn records(&self) -> Vec<MetricsRecord> {
        self.runs
            .iter()
            .flat_map(|r| r.records.iter().cloned())
            .collect()
    }

    pub fn failures(&self) -> Vec<SeedFailure> {
        self.runs.iter().filter_map(|r| r.failure.clone()).collect()
    }

    pub fn checkpoints(&self) -> Result<Vec<Checkpoint>> {
        self.runs
            .iter()
            .map(|r| Checkpoint::capture(&self.spec, r.seed, &r.model))
            .collect()
    }
}

fn check_data(spec: &ModelSpec, data: &Dataset) -> Result<()> {
    if data.dim() != spec.dims.input_dim {
        return Err(dims(format!(
            "dataset has {} features, model expects {}",
            data.dim(),
            spec.dims.input_dim
        )));
    }
    if data.num_classes() > spec.dims.classes {
        return Err(invalid(format!(
            "dataset has label {} but the model has {} classes",
            data.num_classes() - 1,
            spec.dims.classes
        )));
    }
    Ok(())
}

/// Trains one freshly initialised model. Epoch 0 is the evaluation before any
/// update; a run that diverges keeps the records gathered so far.
pub fn fit_seed(
    spec: &ModelSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainingConfig,
    seed: u64,
) -> Result<SeedRun> {
    config.validate()?;
    check_data(spec, train)?;
    if let Some(t) = test {
        check_data(spec, t)?;
    }
    let mut model = spec.build(seed)?;
    let exec = config
        .executor
        .clone()
        .with_seed(mix_seed(config.executor.seed, seed));
    let mut opt = OptimizerState::new(config.optimizer, model.classifier());
    let mut order_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x0005_4AFF_1E00));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch = if config.batch_size == 0 {
        train.len()
    } else {
        config.batch_size
    };
    let started = Instant::now();
    let mut records = Vec::new();
    let mut step: u64 = 0;

    let record = |records: &mut Vec<MetricsRecord>, model: &Model, epoch: usize| -> Result<f64> {
        let eval_stream = mix_seed(seed, 1 << 40 | epoch as u64);
        let prep = model.classifier().prepare(&exec, eval_stream)?;
        let mut train_loss = 0.0;
        let sets = [(Split::Train, Some(train)), (Split::Test, test)];
        for (split, data) in sets {
            let Some(data) = data else { continue };
            let (loss, accuracy) = evaluate(
                model.classifier(),
                &prep,
                data,
                &exec,
                mix_seed(eval_stream, split as u64),
            )?;
            if split == Split::Train {
                train_loss = loss;
            }
            records.push(MetricsRecord {
                epoch,
                split,
                seed,
                loss,
                accuracy,
                wall_time_ms: if config.wall_time {
                    started.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
        }
        Ok(train_loss)
    };

    record(&mut records, &model, 0)?;
    let mut failure = None;
    'epochs: for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut order_rng);
        }
        for chunk in order.chunks(batch) {
            step += 1;
            let outcome = train_step(
                model.classifier_mut(),
                &mut opt,
                train,
                chunk,
                config.learning_rate,
                &exec,
                mix_seed(seed, step),
            );
            let reason = match outcome {
                Ok(loss) if loss > DIVERGENCE_THRESHOLD => {
                    Some(format!("loss {loss:.3e} exceeded {DIVERGENCE_THRESHOLD:e}"))
                }
                Ok(_) => None,
                Err(Error::NonFinite(msg)) => Some(format!("non-finite value: {msg}")),
                Err(e) => return Err(e),
            };
            if let Some(reason) = reason {
                warn!("seed {seed} diverged in epoch {epoch}: {reason}");
                failure = Some(SeedFailure {
                    seed,
                    epoch,
                    reason,
                });
                break 'epochs;
            }
        }
        let loss = record(&mut records, &model, epoch)?;
        info!("seed {seed} epoch {epoch}: train loss {loss:.6}");
    }
    Ok(SeedRun {
        seed,
        records,
        model,
        failure,
    })
}

/// Runs every configured seed and aggregates the metrics.
pub fn fit(
    spec: &ModelSpec,
    train: &Dataset,
    test: Option<&Dataset>,
    config: &TrainingConfig,
) -> Result<FitResult> {
    let runs = config
        .seeds
        .par_iter()
        .map(|&s| fit_seed(spec, train, test, config, s))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&runs);
    Ok(FitResult {
        spec: spec.clone(),
        runs,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDims, ModelKind};

    #[test]
    fn cross_entropy_values() {
        assert_eq!(cross_entropy(&[1.0, 0.0], 0).unwrap(), 0.0);
        assert!((cross_entropy(&[0.5, 0.5], 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((cross_entropy(&[0.9, 0.1], 1).unwrap() - std::f64::consts::LN_10).abs() < 1e-12);
        assert!((cross_entropy(&[1.0, 0.0], 1).unwrap() - 27.631021115928547).abs() < 1e-9);
        assert!(cross_entropy(&[1.0, 0.0], 2).is_err());
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }

    fn blobs() -> Dataset {
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                let j = (i / 2) as f64 * 0.05;
                vec![s + j, s - j, 0.5 * s, -0.3 + j]
            })
            .collect();
        Dataset::from_rows(&rows, (0..40).map(|i| i % 2).collect(), Split::Train).unwrap()
    }

    #[test]
    fn zero_epochs_gives_initial_evaluation() {
        let spec = ModelSpec::new(ModelKind::Mlp, ModelDims::new(4, 8, 2, 0, 0));
        let cfg = TrainingConfig {
            epochs: 0,
            seeds: vec![3],
            ..Default::default()
        };
        let r = fit(&spec, &blobs(), None, &cfg).unwrap();
        assert_eq!(r.records().len(), 1);
        assert_eq!(r.records()[0].epoch, 0);
    }

    #[test]
    fn divergence_is_recorded() {
        let spec = ModelSpec::new(ModelKind::Mlp, ModelDims::new(4, 8, 2, 0, 0));
        let cfg = TrainingConfig {
            epochs: 5,
            seeds: vec![1],
            learning_rate: 1e200,
            optimizer: Optimizer::Sgd,
            ..Default::default()
        };
        let r = fit(&spec, &blobs(), None, &cfg).unwrap();
        assert_eq!(r.failures().len(), 1);
        assert!(r.summary.is_empty());
    }

    #[test]
    fn rejects_mismatched_data() {
        let spec = ModelSpec::new(ModelKind::Mlp, ModelDims::new(5, 8, 2, 0, 0));
        assert!(fit(&spec, &blobs(), None, &TrainingConfig::default()).is_err());
    }
}
