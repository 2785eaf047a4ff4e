//! Mini-batch training with NAdam and early stopping on validation loss.

mod optim;

use std::ops::ControlFlow;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dfg::{build_dfg, encode_features, DfgError, DfgGraph, DfgVariant, FeatureNormalizer};
use crate::eventlog::vocab::ClassSpace;
use crate::eventlog::Vocab;
use crate::gnn::{GnnError, GraphBatch, PpmModel, Targets, Task};
use crate::nncore::{NnError, ParamStore, Tape, Tensor};
use crate::sampling::{PrefixSample, TargetScaler};

pub use optim::{EarlyStopping, Nadam, Observation};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Dfg(#[from] DfgError),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("no {0} samples with a usable target")]
    NoSamples(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch} (cases {cases})")]
    NonFiniteLoss { epoch: usize, batch: usize, cases: String },
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

fn default_lr() -> f64 {
    1e-4
}
fn default_epochs() -> usize {
    100
}
fn default_patience() -> Option<usize> {
    Some(10)
}
fn default_batch() -> usize {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// `null` disables early stopping.
    #[serde(default = "default_patience")]
    pub patience: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            max_epochs: default_epochs(),
            patience: default_patience(),
            batch_size: default_batch(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(TrainError::InvalidConfig(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be > 0");
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if self.patience.is_some_and(|p| p == 0 || p > self.max_epochs) {
            return fail("patience must be in 1..=max_epochs");
        }
        Ok(())
    }
}

/// A prefix sample with its encoded graph and both targets.
#[derive(Clone, Debug)]
pub struct EncodedSample {
    pub case_id: String,
    pub k: usize,
    pub graph: DfgGraph,
    /// Next-activity class, `None` if the activity is outside the class space.
    pub class: Option<usize>,
    pub is_end: bool,
    pub remaining_hours: f64,
}

/// Builds and encodes one graph per sample. Output order follows input order.
pub fn encode_samples(
    samples: &[PrefixSample],
    activity_vocab: &Vocab,
    resource_vocab: &Vocab,
    variant: DfgVariant,
    normalizer: &FeatureNormalizer,
) -> Result<Vec<EncodedSample>> {
    let classes = ClassSpace::new(activity_vocab);
    samples
        .par_iter()
        .map(|s| {
            let raw = build_dfg(s, activity_vocab, resource_vocab, variant)?;
            Ok(EncodedSample {
                case_id: s.case_id.clone(),
                k: s.k,
                graph: encode_features(&raw, normalizer)?,
                class: s.next_activity.and_then(|a| classes.class_of(a)),
                is_end: s.is_end(),
                remaining_hours: s.remaining_hours,
            })
        })
        .collect()
}

/// Whether a sample carries a loss for `task`.
pub fn is_supervised(sample: &EncodedSample, task: Task) -> bool {
    task == Task::RemainingTime || sample.class.is_some()
}

pub fn supervised(samples: &[EncodedSample], task: Task) -> Vec<&EncodedSample> {
    samples.iter().filter(|s| is_supervised(s, task)).collect()
}

fn targets(batch: &[&EncodedSample], task: Task, scaler: &TargetScaler) -> Targets {
    match task {
        Task::NextActivity => Targets::Classes(batch.iter().map(|s| s.class.expect("filtered")).collect::<Rc<[usize]>>()),
        Task::RemainingTime => Targets::Values(batch.iter().map(|s| scaler.transform(s.remaining_hours)).collect()),
    }
}

fn graph_batch(samples: &[&EncodedSample]) -> Result<GraphBatch> {
    let graphs: Vec<&DfgGraph> = samples.iter().map(|s| &s.graph).collect();
    Ok(GraphBatch::new(&graphs)?)
}

/// Head outputs for all samples, in order, `n x outputs`.
pub fn predict_all(model: &PpmModel, samples: &[&EncodedSample], batch_size: usize) -> Result<Tensor> {
    let mut parts = Vec::new();
    for chunk in samples.chunks(batch_size.max(1)) {
        parts.push(model.predict(&graph_batch(chunk)?)?);
    }
    let refs: Vec<&Tensor> = parts.iter().collect();
    if refs.is_empty() {
        let cols = match model.task {
            Task::NextActivity => model.sizes.num_classes,
            Task::RemainingTime => 1,
        };
        return Ok(Tensor::zeros(0, cols));
    }
    Ok(Tensor::vstack(&refs)?)
}

/// Mean per-sample task loss over supervised samples.
pub fn mean_loss(model: &PpmModel, samples: &[&EncodedSample], scaler: &TargetScaler, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in samples.chunks(batch_size.max(1)) {
        let out = model.predict(&graph_batch(chunk)?)?;
        total += sample_losses(&out, chunk, model.task, scaler).iter().sum::<f64>();
    }
    Ok(total / samples.len().max(1) as f64)
}

/// Per-sample losses from head outputs: cross-entropy or absolute error on
/// the scaled target.
pub fn sample_losses(out: &Tensor, samples: &[&EncodedSample], task: Task, scaler: &TargetScaler) -> Vec<f64> {
    samples
        .iter()
        .enumerate()
        .map(|(r, s)| match task {
            Task::NextActivity => {
                let row = out.row(r);
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
                lse - row[s.class.expect("filtered")]
            }
            Task::RemainingTime => (out.get(r, 0) - scaler.transform(s.remaining_hours)).abs(),
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_params: ParamStore,
    pub steps: u64,
    pub stopped_early: bool,
}

/// Trains `model` in place; on return it holds the final parameters and
/// the outcome holds the best ones. `on_epoch` may end training early.
pub fn train<F>(
    model: &mut PpmModel,
    train_set: &[EncodedSample],
    val_set: &[EncodedSample],
    scaler: &TargetScaler,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainOutcome>
where
    F: FnMut(&EpochRecord, &PpmModel) -> ControlFlow<()>,
{
    cfg.validate()?;
    let task = model.task;
    let train_set = supervised(train_set, task);
    let val_set = supervised(val_set, task);
    if train_set.is_empty() {
        return Err(TrainError::NoSamples("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::NoSamples("validation"));
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d80f);
    let mut opt = Nadam::new(cfg.learning_rate, &model.params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = model.params.clone();
    let mut history = Vec::new();
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&EncodedSample> = idx.iter().map(|&i| train_set[i]).collect();
            let graphs = graph_batch(&batch)?;
            let mut tape = Tape::new();
            let vars = tape.params(&model.params);
            let out = model.forward(&mut tape, &vars, &graphs, Some(&mut dropout_rng))?;
            let loss = model.loss(&mut tape, out, &targets(&batch, task, scaler))?;
            let value = tape.value(loss).item();
            let grads = tape.backward(loss)?;
            if !value.is_finite() || !grads.is_finite() {
                let cases: Vec<&str> = batch.iter().map(|s| s.case_id.as_str()).collect();
                log::error!(
                    "non-finite loss {value} at epoch {epoch} batch {b}; prefixes {:?}",
                    batch.iter().map(|s| (&s.case_id, s.k)).collect::<Vec<_>>()
                );
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    cases: cases.join(","),
                });
            }
            opt.update(&mut model.params, &grads)?;
            total += value * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = mean_loss(model, &val_set, scaler, cfg.batch_size)?;
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            seconds: started.elapsed().as_secs_f64(),
        };
        log::info!(
            "epoch {epoch}: train {train_loss:.6} val {val_loss:.6} ({:.1}s)",
            record.seconds
        );
        let obs = stopper.observe(epoch, val_loss);
        if obs.improved {
            best_params = model.params.clone();
        }
        history.push(record);
        if obs.stop {
            stopped_early = true;
            break;
        }
        if on_epoch(history.last().unwrap(), model).is_break() {
            break;
        }
    }
    let (best_epoch, best_val_loss) = stopper.best().expect("at least one epoch ran");
    Ok(TrainOutcome {
        history,
        best_epoch,
        best_val_loss,
        best_params,
        steps: opt.step,
        stopped_early,
    })
}

#[cfg(test)]
mod tests;
