use super::{Ctx, ParamId, ParamStore, StatsId};
use crate::error::Result;
use crate::tape::Var;
use crate::tensor::Scalar;

#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Conv1d {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        bias: bool,
    ) -> Self {
        let fan_in = in_c * kernel;
        Conv1d {
            weight: store.uniform(format!("{name}.weight"), &[out_c, in_c, kernel], fan_in),
            bias: bias.then(|| store.uniform(format!("{name}.bias"), &[out_c], fan_in)),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.weight), self.bias.map(|b| ctx.p(b)));
        ctx.tape.conv1d(x, w, b)
    }
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        in_c: usize,
        out_c: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
    ) -> Self {
        let fan_in = in_c * kernel * kernel;
        Conv2d {
            weight: store.uniform(
                format!("{name}.weight"),
                &[out_c, in_c, kernel, kernel],
                fan_in,
            ),
            bias: bias.then(|| store.uniform(format!("{name}.bias"), &[out_c], fan_in)),
            stride,
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.weight), self.bias.map(|b| ctx.p(b)));
        ctx.tape.conv2d(x, w, b, self.stride)
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub stats: StatsId,
}

impl BatchNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, channels: usize) -> Self {
        BatchNorm {
            gamma: store.constant(format!("{name}.gamma"), &[channels], 1.0),
            beta: store.constant(format!("{name}.beta"), &[channels], 0.0),
            stats: store.running_stats(name, channels),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (g, b, mode) = (ctx.p(self.gamma), ctx.p(self.beta), ctx.mode);
        // the tape and the stats live in different borrows of ctx
        let stats = &mut ctx.stats[self.stats.0].stats;
        ctx.tape.batchnorm(x, g, b, stats, mode)
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        name: &str,
        inputs: usize,
        outputs: usize,
    ) -> Self {
        Linear {
            weight: store.uniform(format!("{name}.weight"), &[outputs, inputs], inputs),
            bias: store.uniform(format!("{name}.bias"), &[outputs], inputs),
        }
    }

    pub fn forward<T: Scalar>(&self, ctx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let (w, b) = (ctx.p(self.weight), ctx.p(self.bias));
        ctx.tape.linear(x, w, b)
    }
}
