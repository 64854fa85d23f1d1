//! Learning-rate policies.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cosine warm-up from `lr_max/div` to `lr_max`, then cosine annealing to
/// `lr_max/div_final`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneCycleSchedule {
    pub lr_max: f64,
    pub total_steps: usize,
    pub pct_start: f64,
    pub div: f64,
    pub div_final: f64,
}

impl OneCycleSchedule {
    pub fn new(lr_max: f64, total_steps: usize) -> Self {
        OneCycleSchedule {
            lr_max,
            total_steps,
            pct_start: 0.25,
            div: 25.0,
            div_final: 1e5,
        }
    }

    pub fn peak_step(&self) -> usize {
        (self.pct_start * self.total_steps as f64).floor() as usize
    }

    pub fn lr(&self, step: usize) -> Result<f64> {
        if step > self.total_steps {
            return Err(Error::config(
                "step",
                format!("{step} is past the last step {}", self.total_steps),
            ));
        }
        let peak = self.peak_step();
        let (start, end, pos) = if step <= peak && peak > 0 {
            (
                self.lr_max / self.div,
                self.lr_max,
                step as f64 / peak as f64,
            )
        } else {
            let span = (self.total_steps - peak).max(1) as f64;
            (
                self.lr_max,
                self.lr_max / self.div_final,
                (step - peak) as f64 / span,
            )
        };
        Ok(cosine(start, end, pos))
    }
}

/// Cosine interpolation, exact at both ends.
fn cosine(start: f64, end: f64, pos: f64) -> f64 {
    let c = (PI * pos).cos();
    start * (1.0 + c) / 2.0 + end * (1.0 - c) / 2.0
}

/// Per-group rates geometrically spaced from `lr_min` (group nearest the
/// input) to `lr_max` (the head). One group gets `lr_max`.
pub fn discriminative_lrs(lr_min: f64, lr_max: f64, n_groups: usize) -> Vec<f64> {
    match n_groups {
        0 => Vec::new(),
        1 => vec![lr_max],
        g => {
            let last = (g - 1) as f64;
            let ratio = lr_max / lr_min;
            (0..g)
                .map(|i| match i {
                    0 => lr_min,
                    i if i == g - 1 => lr_max,
                    i => lr_min * ratio.powf(i as f64 / last),
                })
                .collect()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrPolicy {
    Fixed {
        lr: f64,
    },
    OneCycle {
        lr_max: f64,
    },
    /// One-cycle with per-group peaks from [`discriminative_lrs`].
    Slice {
        lr_min: f64,
        lr_max: f64,
    },
}

impl LrPolicy {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            LrPolicy::Fixed { lr } if !ok(lr) => {
                Err(Error::config("lr", format!("{lr} must be positive")))
            }
            LrPolicy::OneCycle { lr_max } if !ok(lr_max) => Err(Error::config(
                "lr_max",
                format!("{lr_max} must be positive"),
            )),
            LrPolicy::Slice { lr_min, lr_max }
                if !(ok(lr_min) && ok(lr_max) && lr_min <= lr_max) =>
            {
                Err(Error::config(
                    "lr_min",
                    format!("need 0 < lr_min {lr_min} <= lr_max {lr_max}"),
                ))
            }
            _ => Ok(()),
        }
    }

    /// Rate of every group at `step` of a run lasting `total_steps`.
    pub fn group_lrs(&self, step: usize, total_steps: usize, n_groups: usize) -> Result<Vec<f64>> {
        Ok(match *self {
            LrPolicy::Fixed { lr } => vec![lr; n_groups],
            LrPolicy::OneCycle { lr_max } => {
                vec![OneCycleSchedule::new(lr_max, total_steps).lr(step)?; n_groups]
            }
            LrPolicy::Slice { lr_min, lr_max } => discriminative_lrs(lr_min, lr_max, n_groups)
                .into_iter()
                .map(|peak| OneCycleSchedule::new(peak, total_steps).lr(step))
                .collect::<Result<_>>()?,
        })
    }
}
