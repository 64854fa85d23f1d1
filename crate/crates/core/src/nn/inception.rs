//! InceptionTime-style 1D classifier.
//!
//! A stack of inception modules, each concatenating three same-padded
//! convolutions of decreasing width and a max-pool branch, with a residual
//! shortcut joining every `residual_every` modules. Global average pooling
//! feeds a linear head that maps the `4·nf` features to the class logits.

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv1d, Linear};
use super::{Ctx, Network, ParamStore};
use crate::error::{Error, Result};
use crate::tape::Var;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InceptionConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    pub depth: usize,
    /// Filters per branch.
    pub nf: usize,
    pub bottleneck_channels: usize,
    pub kernel_sizes: Vec<usize>,
    pub residual_every: usize,
    pub seq_len: usize,
}

impl Default for InceptionConfig {
    fn default() -> Self {
        InceptionConfig {
            in_channels: 1,
            n_classes: 8,
            depth: 6,
            nf: 32,
            bottleneck_channels: 32,
            kernel_sizes: vec![39, 19, 9],
            residual_every: 3,
            seq_len: 94,
        }
    }
}

impl InceptionConfig {
    /// Channels produced by every module: one block of `nf` per branch.
    pub fn feature_width(&self) -> usize {
        (self.kernel_sizes.len() + 1) * self.nf
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("in_channels", self.in_channels),
            ("depth", self.depth),
            ("nf", self.nf),
            ("bottleneck_channels", self.bottleneck_channels),
            ("residual_every", self.residual_every),
            ("seq_len", self.seq_len),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(field, "must be positive"));
            }
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "need at least two classes"));
        }
        if self.kernel_sizes.is_empty() {
            return Err(Error::config("kernel_sizes", "need at least one kernel"));
        }
        if self.kernel_sizes.iter().any(|k| k % 2 == 0) {
            return Err(Error::config(
                "kernel_sizes",
                format!("{:?} must all be odd", self.kernel_sizes),
            ));
        }
        if self.kernel_sizes.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::config(
                "kernel_sizes",
                format!("{:?} must be strictly decreasing", self.kernel_sizes),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct InceptionModule {
    pub bottleneck: Option<Conv1d>,
    pub convs: Vec<Conv1d>,
    pub pool_conv: Conv1d,
    pub bn: BatchNorm,
    in_channels: usize,
}

impl InceptionModule {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        cfg: &InceptionConfig,
    ) -> Self {
        // a 1×1 projection of a single channel would only rescale it
        let bottleneck = (in_c > 1).then(|| {
            Conv1d::new(
                store,
                &format!("{name}.bottleneck"),
                in_c,
                cfg.bottleneck_channels,
                1,
                false,
            )
        });
        let branch_in = if in_c > 1 {
            cfg.bottleneck_channels
        } else {
            in_c
        };
        let convs = cfg
            .kernel_sizes
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                Conv1d::new(
                    store,
                    &format!("{name}.conv{i}"),
                    branch_in,
                    cfg.nf,
                    k,
                    false,
                )
            })
            .collect();
        let pool_conv = Conv1d::new(store, &format!("{name}.pool_conv"), in_c, cfg.nf, 1, false);
        let bn = BatchNorm::new(store, &format!("{name}.bn"), cfg.feature_width());
        InceptionModule {
            bottleneck,
            convs,
            pool_conv,
            bn,
            in_channels: in_c,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let c = ctx.tape.value(x).shape()[1];
        if c != self.in_channels {
            return Err(Error::shape(
                "inception module",
                format!(
                    "input has {c} channels, module expects {}",
                    self.in_channels
                ),
            ));
        }
        let z = match &self.bottleneck {
            Some(b) => b.forward(ctx, x)?,
            None => x,
        };
        let mut branches = Vec::with_capacity(self.convs.len() + 1);
        for conv in &self.convs {
            branches.push(conv.forward(ctx, z)?);
        }
        let pooled = ctx.tape.maxpool1d(x)?;
        branches.push(self.pool_conv.forward(ctx, pooled)?);
        let cat = ctx.tape.concat(&branches)?;
        let y = self.bn.forward(ctx, cat)?;
        Ok(ctx.tape.relu(y))
    }
}

#[derive(Clone, Debug)]
struct Shortcut {
    conv: Conv1d,
    bn: BatchNorm,
}

#[derive(Clone, Debug)]
pub struct InceptionTime<T> {
    cfg: InceptionConfig,
    store: ParamStore<T>,
    modules: Vec<InceptionModule>,
    shortcuts: Vec<Shortcut>,
    head: Linear,
}

impl<T: Scalar> InceptionTime<T> {
    pub fn new(cfg: InceptionConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let width = cfg.feature_width();
        let mut store = ParamStore::new(seed);
        let mut modules = Vec::with_capacity(cfg.depth);
        let mut shortcuts = Vec::new();
        let mut res_channels = cfg.in_channels;
        for d in 0..cfg.depth {
            store.begin_group(format!("block{d}"));
            let in_c = if d == 0 { cfg.in_channels } else { width };
            modules.push(InceptionModule::new(
                &mut store,
                &format!("block{d}"),
                in_c,
                &cfg,
            ));
            if (d + 1) % cfg.residual_every == 0 {
                let name = format!("block{d}.shortcut");
                shortcuts.push(Shortcut {
                    conv: Conv1d::new(
                        &mut store,
                        &format!("{name}.conv"),
                        res_channels,
                        width,
                        1,
                        false,
                    ),
                    bn: BatchNorm::new(&mut store, &format!("{name}.bn"), width),
                });
                res_channels = width;
            }
        }
        store.begin_group("head");
        let head = Linear::new(&mut store, "head", width, cfg.n_classes);
        Ok(InceptionTime {
            cfg,
            store,
            modules,
            shortcuts,
            head,
        })
    }

    pub fn config(&self) -> &InceptionConfig {
        &self.cfg
    }

    pub fn modules(&self) -> &[InceptionModule] {
        &self.modules
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    pub fn residual_joins(&self) -> usize {
        self.shortcuts.len()
    }

    /// Features after global average pooling, before the head.
    pub fn features(&self, ctx: &mut Ctx<'_, T>, input: Var) -> Result<Var> {
        let mut x = input;
        let mut res = input;
        let mut joins = self.shortcuts.iter();
        for (d, m) in self.modules.iter().enumerate() {
            x = m.forward(ctx, x)?;
            if (d + 1) % self.cfg.residual_every == 0 {
                let sc = joins.next().expect("one shortcut per join");
                let s = sc.conv.forward(ctx, res)?;
                let s = sc.bn.forward(ctx, s)?;
                let sum = ctx.tape.add(x, s)?;
                x = ctx.tape.relu(sum);
                res = x;
            }
        }
        ctx.tape.global_avg_pool(x)
    }
}

impl<T: Scalar> Network<T> for InceptionTime<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![self.cfg.in_channels, self.cfg.seq_len]
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn forward_layers(&self, ctx: &mut Ctx<'_, T>, input: Var) -> Result<Var> {
        let f = self.features(ctx, input)?;
        self.head.forward(ctx, f)
    }
}
