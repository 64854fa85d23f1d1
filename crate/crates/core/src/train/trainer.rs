use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::metrics::{evaluate, EvalReport};
use super::schedule::LrPolicy;
use crate::data::{batch_indices, make_batch, SampleSource, SplitIndices};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::ops::Mode;
use crate::tape::GradTape;
use crate::tensor::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    #[default]
    Direct,
    Wavelet,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub approach: Approach,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_policy: LrPolicy,
    pub seed: u64,
    pub weight_decay: f64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            approach: Approach::Direct,
            epochs: 20,
            batch_size: 64,
            lr_policy: LrPolicy::Fixed { lr: 1e-3 },
            seed: 42,
            weight_decay: 0.01,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config(
                "weight_decay",
                format!("{} must be non-negative", self.weight_decay),
            ));
        }
        self.lr_policy.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub accuracy: f64,
}

/// Everything deterministic about a run. Wall-clock times are kept out so
/// repeated runs serialize identically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_accuracy: f64,
    /// Validation confusion of the retained checkpoint.
    pub confusion: Vec<Vec<usize>>,
    pub steps: usize,
    pub samples: usize,
    pub points: usize,
}

impl History {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("history serializes")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub history: History,
    pub report: EvalReport,
    pub epoch_seconds: Vec<f64>,
}

/// Train `model` on `split.train`, evaluating `split.valid` after every
/// epoch. The model ends holding the parameters of the epoch with the best
/// validation accuracy (the earliest one on ties). `on_epoch` sees each
/// record as soon as it exists.
pub fn train<T: Scalar>(
    model: &mut dyn Network<T>,
    src: &dyn SampleSource,
    split: &SplitIndices,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if split.train.is_empty() {
        return Err(Error::data(None, "empty training set"));
    }
    let n_groups = model.store().groups().len();
    let group_of: Vec<usize> = model.store().params().iter().map(|p| p.group).collect();
    let per_epoch = split.train.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut state = AdamState::new(model.store().params());
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_accuracy: f64::NEG_INFINITY,
        confusion: Vec::new(),
        steps: 0,
        samples: 0,
        points: 0,
    };
    let mut best: Option<(crate::nn::ParamStore<T>, EvalReport)> = None;
    let mut epoch_seconds = Vec::new();

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let mut loss_sum = 0.0;
        let mut seen = 0;
        for idx in batch_indices(&split.train, cfg.batch_size, true, cfg.seed, epoch) {
            let batch = make_batch::<T>(src, &idx)?;
            let mut tape = GradTape::new();
            let x = tape.leaf(batch.inputs, false);
            let fwd = model.forward(&mut tape, x, Mode::Train)?;
            let loss = tape.cross_entropy(fwd.logits, &batch.labels)?;
            let value = tape.value(loss).data()[0].f64();
            if !value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss {value} at epoch {} step {}",
                    epoch + 1,
                    history.steps
                )));
            }
            tape.backward(loss)?;
            let grads: Vec<_> = fwd.params.iter().map(|&v| tape.grad(v)).collect();
            let group_lrs = cfg.lr_policy.group_lrs(history.steps, total, n_groups)?;
            let lrs: Vec<f64> = group_of.iter().map(|&g| group_lrs[g]).collect();
            adam_step(
                model.store_mut().params_mut(),
                &grads,
                &mut state,
                &lrs,
                cfg.weight_decay,
            )
            .map_err(|e| match e {
                Error::NonFinite(m) => {
                    Error::NonFinite(format!("{m} at epoch {} step {}", epoch + 1, history.steps))
                }
                e => e,
            })?;
            history.steps += 1;
            history.samples += idx.len();
            history.points += idx.len() * src.points_per_sample();
            loss_sum += value * idx.len() as f64;
            seen += idx.len();
        }
        let report = if split.valid.is_empty() {
            None
        } else {
            Some(evaluate(model, src, &split.valid, cfg.batch_size)?)
        };
        let (valid_loss, accuracy) = report
            .as_ref()
            .map_or((f64::NAN, 0.0), |r| (r.loss, r.accuracy));
        let rec = EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / seen as f64,
            valid_loss,
            accuracy,
        };
        on_epoch(&rec);
        history.epochs.push(rec);
        if let Some(r) = report {
            if r.accuracy > history.best_accuracy {
                history.best_accuracy = r.accuracy;
                history.best_epoch = epoch + 1;
                best = Some((model.store().clone(), r));
            }
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
    }

    let (store, report) = best.ok_or_else(|| Error::data(None, "empty validation set"))?;
    *model.store_mut() = store;
    history.confusion = report.confusion.clone();
    Ok(TrainOutcome {
        history,
        report,
        epoch_seconds,
    })
}
