use serde::{Deserialize, Serialize};

use crate::data::{batch_indices, make_batch, SampleSource};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::ops::{softmax_cross_entropy, Mode};
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub loss: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    /// Zero for a class that is never predicted.
    pub precision: Vec<f64>,
    /// Zero for a class absent from the data.
    pub recall: Vec<f64>,
}

impl EvalReport {
    pub fn from_predictions(
        labels: &[usize],
        preds: &[usize],
        n_classes: usize,
        loss: f64,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::data(None, "empty validation set"));
        }
        assert_eq!(labels.len(), preds.len());
        let mut confusion = vec![vec![0usize; n_classes]; n_classes];
        for (&t, &p) in labels.iter().zip(preds) {
            if t >= n_classes {
                return Err(Error::Label {
                    label: t,
                    classes: n_classes,
                });
            }
            confusion[t][p] += 1;
        }
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        let trace: usize = (0..n_classes).map(|k| confusion[k][k]).sum();
        let precision = (0..n_classes)
            .map(|k| {
                ratio(
                    confusion[k][k],
                    (0..n_classes).map(|t| confusion[t][k]).sum(),
                )
            })
            .collect();
        let recall = (0..n_classes)
            .map(|k| ratio(confusion[k][k], confusion[k].iter().sum()))
            .collect();
        Ok(EvalReport {
            accuracy: ratio(trace, labels.len()),
            loss,
            confusion,
            precision,
            recall,
        })
    }

    pub fn total(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

/// Index of the largest entry; the first wins ties.
pub fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Eval-mode pass over `indices` in order. Running statistics and parameters
/// are left untouched. The loss is the mean over samples.
pub fn evaluate<T: Scalar>(
    model: &mut dyn Network<T>,
    src: &dyn SampleSource,
    indices: &[usize],
    batch_size: usize,
) -> Result<EvalReport> {
    if indices.is_empty() {
        return Err(Error::data(None, "empty validation set"));
    }
    let k = model.n_classes();
    let (mut labels, mut preds) = (Vec::new(), Vec::new());
    let mut loss_sum = 0.0;
    for idx in batch_indices(indices, batch_size, false, 0, 0) {
        let batch = make_batch::<T>(src, &idx)?;
        let logits = model.predict(&batch.inputs, Mode::Eval)?;
        let (loss, _) = softmax_cross_entropy(&logits, &batch.labels)?;
        loss_sum += loss.f64() * idx.len() as f64;
        preds.extend(logits.data().chunks(k).map(argmax));
        labels.extend(batch.labels);
    }
    let loss = loss_sum / labels.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("validation loss {loss}")));
    }
    EvalReport::from_predictions(&labels, &preds, k, loss)
}
