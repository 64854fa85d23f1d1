//! Parameter storage, layers and the two network families.

mod checkpoint;
mod inception;
mod layers;
mod resnet;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, read_checkpoint, save_checkpoint,
    Checkpoint, TensorEntry,
};
pub use inception::{InceptionConfig, InceptionModule, InceptionTime};
pub use layers::{BatchNorm, Conv1d, Conv2d, Linear};
pub use resnet::{BasicBlock, ResNet2D, ResNet2DConfig};

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ops::{Mode, RunningStats};
use crate::tape::{GradTape, Var};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StatsId(usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub group: usize,
}

/// Named running statistics of one normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NamedStats<T> {
    pub name: String,
    pub stats: RunningStats<T>,
}

/// A contiguous set of parameters trained with one learning rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: String,
    pub params: Vec<usize>,
    pub numel: usize,
}

/// Every trainable tensor and normalization buffer of a network. Each
/// parameter belongs to exactly one group; groups are ordered from the
/// input toward the output.
#[derive(Clone, Debug)]
pub struct ParamStore<T> {
    params: Vec<Param<T>>,
    stats: Vec<NamedStats<T>>,
    groups: Vec<String>,
    rng: Pcg64,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            params: Vec::new(),
            stats: Vec::new(),
            groups: Vec::new(),
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    /// Open a new group; parameters added afterward belong to it.
    pub fn begin_group(&mut self, name: impl Into<String>) -> usize {
        self.groups.push(name.into());
        self.groups.len() - 1
    }

    fn current_group(&self) -> usize {
        self.groups
            .len()
            .checked_sub(1)
            .expect("begin_group before adding parameters")
    }

    /// Weight drawn from `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn uniform(&mut self, name: impl Into<String>, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let rng = &mut self.rng;
        let value = Tensor::from_fn(shape.to_vec(), |_| T::of(rng.random_range(-bound..bound)));
        self.push(name.into(), value)
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: &[usize], v: f64) -> ParamId {
        self.push(name.into(), Tensor::full(shape.to_vec(), T::of(v)))
    }

    fn push(&mut self, name: String, value: Tensor<T>) -> ParamId {
        let group = self.current_group();
        self.params.push(Param { name, value, group });
        ParamId(self.params.len() - 1)
    }

    pub fn running_stats(&mut self, name: impl Into<String>, channels: usize) -> StatsId {
        self.stats.push(NamedStats {
            name: name.into(),
            stats: RunningStats::new(channels),
        });
        StatsId(self.stats.len() - 1)
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn stats(&self) -> &[NamedStats<T>] {
        &self.stats
    }

    pub fn stats_mut(&mut self) -> &mut [NamedStats<T>] {
        &mut self.stats
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let mut out: Vec<ParamGroup> = self
            .groups
            .iter()
            .map(|n| ParamGroup {
                name: n.clone(),
                params: Vec::new(),
                numel: 0,
            })
            .collect();
        for (i, p) in self.params.iter().enumerate() {
            out[p.group].params.push(i);
            out[p.group].numel += p.value.numel();
        }
        out
    }

    /// Record every parameter as a leaf of `tape`.
    pub fn bind(&self, tape: &mut GradTape<T>, requires_grad: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), requires_grad))
            .collect()
    }

    /// SHA-256 over parameter and buffer bytes, in storage order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        let mut buf = Vec::new();
        let tensors = self.params.iter().map(|p| &p.value).chain(
            self.stats
                .iter()
                .flat_map(|s| [&s.stats.mean, &s.stats.var]),
        );
        for t in tensors {
            buf.clear();
            for &v in t.data() {
                v.write_le(&mut buf);
            }
            h.update(&buf);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Every named tensor: parameters first, then `<name>.running_mean` and
    /// `<name>.running_var` for each normalization layer.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), &p.value))
            .collect();
        for s in &self.stats {
            out.push((format!("{}.running_mean", s.name), &s.stats.mean));
            out.push((format!("{}.running_var", s.name), &s.stats.var));
        }
        out
    }

    /// Overwrite tensors by name; every stored tensor must be supplied with
    /// a matching shape.
    pub fn assign_named(
        &mut self,
        mut src: std::collections::HashMap<String, Tensor<T>>,
    ) -> Result<()> {
        let mut take = |name: &str, dst: &mut Tensor<T>| -> Result<()> {
            let t = src
                .remove(name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            if t.shape() != dst.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, model expects {:?}",
                    t.shape(),
                    dst.shape()
                )));
            }
            *dst = t;
            Ok(())
        };
        for p in &mut self.params {
            take(&p.name, &mut p.value)?;
        }
        for s in &mut self.stats {
            take(&format!("{}.running_mean", s.name), &mut s.stats.mean)?;
            take(&format!("{}.running_var", s.name), &mut s.stats.var)?;
        }
        if let Some(extra) = src.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected tensor {extra}")));
        }
        Ok(())
    }
}

/// Forward-pass context: parameter handles on the current tape, mutable
/// running statistics and the normalization mode.
pub struct Ctx<'a, T> {
    pub tape: &'a mut GradTape<T>,
    vars: Vec<Var>,
    stats: &'a mut [NamedStats<T>],
    pub mode: Mode,
}

impl<T: Scalar> Ctx<'_, T> {
    pub fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn stats(&mut self, id: StatsId) -> &mut RunningStats<T> {
        &mut self.stats[id.0].stats
    }
}

/// Result of a forward pass: logits plus the tape handle of each parameter,
/// indexed like [`ParamStore::params`].
#[derive(Clone, Debug)]
pub struct Forward {
    pub logits: Var,
    pub params: Vec<Var>,
}

/// A classifier built from layers over a [`ParamStore`].
pub trait Network<T: Scalar> {
    fn store(&self) -> &ParamStore<T>;
    fn store_mut(&mut self) -> &mut ParamStore<T>;
    /// Shape of one sample, without the batch axis.
    fn sample_shape(&self) -> Vec<usize>;
    fn n_classes(&self) -> usize;
    /// Layer graph from an input handle to logits.
    fn forward_layers(&self, ctx: &mut Ctx<'_, T>, input: Var) -> Result<Var>;

    fn forward(&mut self, tape: &mut GradTape<T>, input: Var, mode: Mode) -> Result<Forward> {
        let got = tape.value(input).shape().to_vec();
        let want = self.sample_shape();
        if got.len() != want.len() + 1 || got[1..] != want[..] {
            return Err(Error::shape(
                "forward",
                format!("expected input [B, {}], got {got:?}", join(&want)),
            ));
        }
        let vars = self.store().bind(tape, mode == Mode::Train);
        let mut stats = std::mem::take(&mut self.store_mut().stats);
        let res = {
            let mut ctx = Ctx {
                tape,
                vars: vars.clone(),
                stats: &mut stats,
                mode,
            };
            self.forward_layers(&mut ctx, input)
        };
        self.store_mut().stats = stats;
        Ok(Forward {
            logits: res?,
            params: vars,
        })
    }

    /// Evaluate logits without recording gradients for later use.
    fn predict(&mut self, inputs: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let mut tape = GradTape::new();
        let x = tape.leaf(inputs.clone(), false);
        let f = self.forward(&mut tape, x, mode)?;
        Ok(tape.value(f.logits).clone())
    }
}

fn join(v: &[usize]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Architecture plus its configuration; enough to rebuild a network from a
/// checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    InceptionTime(InceptionConfig),
    Resnet2d(ResNet2DConfig),
}

impl ModelSpec {
    pub fn build<T: Scalar>(&self, seed: u64) -> Result<Box<dyn Network<T>>> {
        Ok(match self {
            ModelSpec::InceptionTime(c) => Box::new(InceptionTime::new(c.clone(), seed)?),
            ModelSpec::Resnet2d(c) => Box::new(ResNet2D::new(c.clone(), seed)?),
        })
    }
}
