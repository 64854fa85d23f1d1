//! Small residual 2D classifier for scalogram images.

use serde::{Deserialize, Serialize};

use super::layers::{BatchNorm, Conv2d, Linear};
use super::{Ctx, Network, ParamStore};
use crate::error::{Error, Result};
use crate::tape::Var;
use crate::tensor::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResNet2DConfig {
    pub in_channels: usize,
    pub n_classes: usize,
    pub stage_widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub input_size: (usize, usize),
}

impl Default for ResNet2DConfig {
    fn default() -> Self {
        ResNet2DConfig {
            in_channels: 3,
            n_classes: 8,
            stage_widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            input_size: (94, 94),
        }
    }
}

impl ResNet2DConfig {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 {
            return Err(Error::config("in_channels", "must be positive"));
        }
        if self.n_classes < 2 {
            return Err(Error::config("n_classes", "need at least two classes"));
        }
        if self.stage_widths.is_empty() || self.stage_widths.contains(&0) {
            return Err(Error::config(
                "stage_widths",
                format!("{:?} must be non-empty and positive", self.stage_widths),
            ));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::config("blocks_per_stage", "must be positive"));
        }
        if self.input_size.0 == 0 || self.input_size.1 == 0 {
            return Err(Error::config("input_size", "must be positive"));
        }
        Ok(())
    }

    /// Spatial size after the stem and each stage; stages after the first
    /// halve it with ceiling division.
    pub fn spatial_trace(&self) -> Vec<(usize, usize)> {
        let mut hw = self.input_size;
        let mut out = vec![hw];
        for s in 0..self.stage_widths.len() {
            if s > 0 {
                hw = (hw.0.div_ceil(2), hw.1.div_ceil(2));
            }
            out.push(hw);
        }
        out
    }
}

/// Two 3×3 convolutions with normalization, plus a shortcut that is the
/// identity or a strided 1×1 projection when the shape changes.
#[derive(Clone, Debug)]
pub struct BasicBlock {
    pub conv1: Conv2d,
    pub bn1: BatchNorm,
    pub conv2: Conv2d,
    pub bn2: BatchNorm,
    pub projection: Option<(Conv2d, BatchNorm)>,
}

impl BasicBlock {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        stride: usize,
    ) -> Self {
        let projection = (stride != 1 || in_c != out_c).then(|| {
            (
                Conv2d::new(
                    store,
                    &format!("{name}.proj"),
                    in_c,
                    out_c,
                    1,
                    stride,
                    false,
                ),
                BatchNorm::new(store, &format!("{name}.proj_bn"), out_c),
            )
        });
        BasicBlock {
            conv1: Conv2d::new(
                store,
                &format!("{name}.conv1"),
                in_c,
                out_c,
                3,
                stride,
                false,
            ),
            bn1: BatchNorm::new(store, &format!("{name}.bn1"), out_c),
            conv2: Conv2d::new(store, &format!("{name}.conv2"), out_c, out_c, 3, 1, false),
            bn2: BatchNorm::new(store, &format!("{name}.bn2"), out_c),
            projection,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.conv1.forward(ctx, x)?;
        let h = self.bn1.forward(ctx, h)?;
        let h = ctx.tape.relu(h);
        let h = self.conv2.forward(ctx, h)?;
        let h = self.bn2.forward(ctx, h)?;
        let short = match &self.projection {
            Some((conv, bn)) => {
                let s = conv.forward(ctx, x)?;
                bn.forward(ctx, s)?
            }
            None => x,
        };
        let sum = ctx.tape.add(h, short)?;
        Ok(ctx.tape.relu(sum))
    }
}

#[derive(Clone, Debug)]
pub struct ResNet2D<T> {
    cfg: ResNet2DConfig,
    store: ParamStore<T>,
    stem: (Conv2d, BatchNorm),
    stages: Vec<Vec<BasicBlock>>,
    head: Linear,
}

impl<T: Scalar> ResNet2D<T> {
    pub fn new(cfg: ResNet2DConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut store = ParamStore::new(seed);
        let w0 = cfg.stage_widths[0];
        store.begin_group("stem");
        let stem = (
            Conv2d::new(&mut store, "stem.conv", cfg.in_channels, w0, 3, 1, false),
            BatchNorm::new(&mut store, "stem.bn", w0),
        );
        let mut stages = Vec::new();
        let mut in_c = w0;
        for (s, &width) in cfg.stage_widths.iter().enumerate() {
            store.begin_group(format!("stage{s}"));
            let blocks = (0..cfg.blocks_per_stage)
                .map(|b| {
                    let stride = if s > 0 && b == 0 { 2 } else { 1 };
                    let blk = BasicBlock::new(
                        &mut store,
                        &format!("stage{s}.block{b}"),
                        in_c,
                        width,
                        stride,
                    );
                    in_c = width;
                    blk
                })
                .collect();
            stages.push(blocks);
        }
        store.begin_group("head");
        let head = Linear::new(&mut store, "head", in_c, cfg.n_classes);
        Ok(ResNet2D {
            cfg,
            store,
            stem,
            stages,
            head,
        })
    }

    pub fn config(&self) -> &ResNet2DConfig {
        &self.cfg
    }

    pub fn stages(&self) -> &[Vec<BasicBlock>] {
        &self.stages
    }

    /// Shapes of the activations after the stem and each stage, for one
    /// forward pass of `input`.
    pub fn trace_shapes(&mut self, input: &crate::tensor::Tensor<T>) -> Result<Vec<Vec<usize>>> {
        let mut tape = crate::tape::GradTape::new();
        let x = tape.leaf(input.clone(), false);
        let vars = self.store.bind(&mut tape, false);
        let mut stats = self.store.stats().to_vec();
        let mut ctx = Ctx {
            tape: &mut tape,
            vars,
            stats: &mut stats,
            mode: crate::ops::Mode::Eval,
        };
        let mut shapes = Vec::new();
        let mut h = self.stem_forward(&mut ctx, x)?;
        shapes.push(ctx.tape.value(h).shape().to_vec());
        for stage in &self.stages {
            for blk in stage {
                h = blk.forward(&mut ctx, h)?;
            }
            shapes.push(ctx.tape.value(h).shape().to_vec());
        }
        Ok(shapes)
    }

    fn stem_forward(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let h = self.stem.0.forward(ctx, x)?;
        let h = self.stem.1.forward(ctx, h)?;
        Ok(ctx.tape.relu(h))
    }
}

impl<T: Scalar> Network<T> for ResNet2D<T> {
    fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![
            self.cfg.in_channels,
            self.cfg.input_size.0,
            self.cfg.input_size.1,
        ]
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn forward_layers(&self, ctx: &mut Ctx<'_, T>, input: Var) -> Result<Var> {
        let mut h = self.stem_forward(ctx, input)?;
        for stage in &self.stages {
            for blk in stage {
                h = blk.forward(ctx, h)?;
            }
        }
        let pooled = ctx.tape.global_avg_pool(h)?;
        self.head.forward(ctx, pooled)
    }
}
