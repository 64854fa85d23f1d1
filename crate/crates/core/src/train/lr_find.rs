use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use crate::data::{batch_indices, make_batch, SampleSource};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::ops::Mode;
use crate::tape::GradTape;
use crate::tensor::Scalar;

pub const SMOOTHING: f64 = 0.98;
pub const DIVERGENCE_FACTOR: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrFindConfig {
    pub start: f64,
    pub end: f64,
    pub n_iter: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for LrFindConfig {
    fn default() -> Self {
        LrFindConfig {
            start: 1e-7,
            end: 10.0,
            n_iter: 100,
            batch_size: 64,
            seed: 42,
            weight_decay: 0.01,
        }
    }
}

impl LrFindConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0 && self.start < self.end && self.end.is_finite()) {
            return Err(Error::config(
                "start",
                format!("need 0 < {} < {}", self.start, self.end),
            ));
        }
        if self.n_iter < 2 {
            return Err(Error::config(
                "n_iter",
                format!("{} is below 2", self.n_iter),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        Ok(())
    }

    /// Rate used at iteration `k`.
    pub fn lr_at(&self, k: usize) -> f64 {
        self.start * (self.end / self.start).powf(k as f64 / (self.n_iter - 1) as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrFindResult {
    pub lrs: Vec<f64>,
    pub losses: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub suggestion: Option<f64>,
}

/// Geometric sweep driving `step(lr)`, which must return the loss measured
/// before applying an update at `lr`. Stops early once the smoothed loss
/// exceeds four times its best value or a loss is not finite.
pub fn sweep(cfg: &LrFindConfig, mut step: impl FnMut(f64) -> Result<f64>) -> Result<LrFindResult> {
    cfg.validate()?;
    let mut res = LrFindResult {
        lrs: Vec::new(),
        losses: Vec::new(),
        smoothed: Vec::new(),
        suggestion: None,
    };
    let (mut avg, mut best) = (0.0, f64::INFINITY);
    for k in 0..cfg.n_iter {
        let lr = cfg.lr_at(k);
        let loss = match step(lr) {
            Ok(l) if l.is_finite() => l,
            Ok(_) | Err(Error::NonFinite(_)) => break,
            Err(e) => return Err(e),
        };
        avg = SMOOTHING * avg + (1.0 - SMOOTHING) * loss;
        let sm = avg / (1.0 - SMOOTHING.powi(k as i32 + 1));
        res.lrs.push(lr);
        res.losses.push(loss);
        res.smoothed.push(sm);
        if k > 0 && sm > DIVERGENCE_FACTOR * best {
            break;
        }
        best = best.min(sm);
    }
    res.suggestion = steepest(&res.lrs, &res.smoothed);
    Ok(res)
}

/// Rate where the smoothed loss falls fastest against `log lr`; central
/// differences inside, one-sided at the ends.
fn steepest(lrs: &[f64], loss: &[f64]) -> Option<f64> {
    let n = lrs.len();
    if n < 3 {
        return None;
    }
    let x: Vec<f64> = lrs.iter().map(|l| l.ln()).collect();
    let slope = |i: usize| {
        let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
        (loss[b] - loss[a]) / (x[b] - x[a])
    };
    let (i, s) = (0..n)
        .map(|i| (i, slope(i)))
        .min_by(|a, b| a.1.total_cmp(&b.1))?;
    (s < 0.0).then_some(lrs[i])
}

/// Learning-rate sweep on a network with Adam. Training batches cycle
/// through reshuffled epochs; parameters and running statistics are
/// restored afterwards.
pub fn lr_find<T: Scalar>(
    model: &mut dyn Network<T>,
    src: &dyn SampleSource,
    train_idx: &[usize],
    cfg: &LrFindConfig,
) -> Result<LrFindResult> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(Error::data(None, "empty training set"));
    }
    let snapshot = model.store().clone();
    let mut state = AdamState::new(model.store().params());
    let mut queue: Vec<Vec<usize>> = Vec::new();
    let mut epoch = 0;
    let res = sweep(cfg, |lr| {
        if queue.is_empty() {
            queue = batch_indices(train_idx, cfg.batch_size, true, cfg.seed, epoch);
            queue.reverse();
            epoch += 1;
        }
        let idx = queue.pop().expect("refilled above");
        let batch = make_batch::<T>(src, &idx)?;
        let mut tape = GradTape::new();
        let x = tape.leaf(batch.inputs, false);
        let fwd = model.forward(&mut tape, x, Mode::Train)?;
        let loss = tape.cross_entropy(fwd.logits, &batch.labels)?;
        let value = tape.value(loss).data()[0].f64();
        if !value.is_finite() {
            return Ok(value);
        }
        tape.backward(loss)?;
        let grads: Vec<_> = fwd.params.iter().map(|&v| tape.grad(v)).collect();
        let lrs = vec![lr; grads.len()];
        match adam_step(
            model.store_mut().params_mut(),
            &grads,
            &mut state,
            &lrs,
            cfg.weight_decay,
        ) {
            Ok(()) => Ok(value),
            Err(Error::NonFinite(_)) => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    });
    *model.store_mut() = snapshot;
    res
}
