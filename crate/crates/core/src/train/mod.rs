//! Optimizer, learning-rate policies, the training loop and evaluation.

mod adam;
mod lr_find;
mod metrics;
mod schedule;
mod trainer;

pub use adam::{adam_step, AdamState, ADAM_EPS, BETA1, BETA2};
pub use lr_find::{lr_find, sweep, LrFindConfig, LrFindResult, DIVERGENCE_FACTOR, SMOOTHING};
pub use metrics::{argmax, evaluate, EvalReport};
pub use schedule::{discriminative_lrs, LrPolicy, OneCycleSchedule};
pub use trainer::{train, Approach, EpochRecord, History, Precision, TrainConfig, TrainOutcome};
