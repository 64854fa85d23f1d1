//! Reverse-mode differentiation over a linear record of executed ops.
//!
//! Every op call evaluates eagerly, appends a node holding its output and
//! whatever the backward rule needs, and returns a [`Var`] handle. One
//! training step builds one tape, calls [`GradTape::backward`] once and
//! reads the gradients of its leaves.

use crate::error::{Error, Result};
use crate::ops::{self, BnSaved, Mode, RunningStats};
use crate::tensor::{Scalar, Tensor};

/// Handle to a value recorded on a [`GradTape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Conv1d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
    },
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
    },
    BatchNorm {
        input: Var,
        gamma: Var,
        beta: Var,
        saved: BnSaved<T>,
    },
    Relu {
        input: Var,
    },
    MaxPool1d {
        input: Var,
        argmax: Vec<u32>,
    },
    GlobalAvgPool {
        input: Var,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        input: Var,
        factor: T,
    },
    Sum {
        input: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor<T>,
    },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

#[derive(Debug)]
pub struct GradTape<T> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    visited: Vec<Var>,
}

impl<T: Scalar> Default for GradTape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> GradTape<T> {
    pub fn new() -> Self {
        GradTape {
            nodes: Vec::new(),
            grads: Vec::new(),
            visited: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input. Only leaves with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv1d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let out = ops::conv1d(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
        )?;
        let rg = self.rg(input) || self.rg(kernel) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            out,
            Op::Conv1d {
                input,
                kernel,
                bias,
            },
            rg,
        ))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
    ) -> Result<Var> {
        let out = ops::conv2d(
            self.value(input),
            self.value(kernel),
            bias.map(|b| self.value(b)),
            stride,
        )?;
        let rg = self.rg(input) || self.rg(kernel) || bias.is_some_and(|b| self.rg(b));
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                stride,
            },
            rg,
        ))
    }

    pub fn batchnorm(
        &mut self,
        input: Var,
        gamma: Var,
        beta: Var,
        running: &mut RunningStats<T>,
        mode: Mode,
    ) -> Result<Var> {
        let (out, saved) = ops::batchnorm(
            self.value(input),
            self.value(gamma),
            self.value(beta),
            running,
            mode,
        )?;
        let rg = self.rg(input) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            out,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                saved,
            },
            rg,
        ))
    }

    pub fn relu(&mut self, input: Var) -> Var {
        let out = ops::relu(self.value(input));
        let rg = self.rg(input);
        self.push(out, Op::Relu { input }, rg)
    }

    pub fn maxpool1d(&mut self, input: Var) -> Result<Var> {
        let (out, argmax) = ops::maxpool1d(self.value(input))?;
        let rg = self.rg(input);
        Ok(self.push(out, Op::MaxPool1d { input, argmax }, rg))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let out = ops::global_avg_pool(self.value(input))?;
        let rg = self.rg(input);
        Ok(self.push(out, Op::GlobalAvgPool { input }, rg))
    }

    pub fn linear(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let out = ops::linear(self.value(input), self.value(weight), self.value(bias))?;
        let rg = self.rg(input) || self.rg(weight) || self.rg(bias);
        Ok(self.push(
            out,
            Op::Linear {
                input,
                weight,
                bias,
            },
            rg,
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = ops::add(self.value(a), self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(
                "mul",
                format!("{:?} vs {:?}", x.shape(), y.shape()),
            ));
        }
        let data = x
            .data()
            .iter()
            .zip(y.data())
            .map(|(&p, &q)| p * q)
            .collect();
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, input: Var, factor: T) -> Var {
        let out = self.value(input).map(|v| v * factor);
        let rg = self.rg(input);
        self.push(out, Op::Scale { input, factor }, rg)
    }

    /// Sum of every element, as a one-element tensor.
    pub fn sum(&mut self, input: Var) -> Var {
        let out = Tensor::scalar(self.value(input).sum());
        let rg = self.rg(input);
        self.push(out, Op::Sum { input }, rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let out = ops::concat_channels(&vals)?;
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(
            out,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    /// Mean softmax cross-entropy; the output is a one-element tensor.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let (loss, probs) = ops::softmax_cross_entropy(self.value(logits), labels)?;
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Probabilities computed by a cross-entropy node.
    pub fn probs(&self, loss: Var) -> Option<&Tensor<T>> {
        match &self.nodes[loss.0].op {
            Op::CrossEntropy { probs, .. } => Some(probs),
            _ => None,
        }
    }

    fn accumulate(&mut self, v: Var, g: Tensor<T>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Propagate `d loss / d loss = 1` back through every recorded op, in
    /// exact reverse order of execution.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if shape.iter().product::<usize>() != 1 {
            return Err(Error::NotScalar(shape));
        }
        self.grads = (0..self.nodes.len()).map(|_| None).collect();
        self.visited.clear();
        self.grads[loss.0] = Some(Tensor::full(shape, T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else {
                continue;
            };
            self.visited.push(Var(i));
            let node = &self.nodes[i];
            // leaves keep their gradient; intermediates release it
            if matches!(node.op, Op::Leaf) {
                self.grads[i] = Some(g);
                continue;
            }
            let mut out: Vec<(Var, Tensor<T>)> = Vec::new();
            match &node.op {
                Op::Leaf => unreachable!("handled above"),
                Op::Conv1d {
                    input,
                    kernel,
                    bias,
                } => {
                    let cg = ops::conv1d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        &g,
                        self.rg(*input),
                    )?;
                    if let Some(gi) = cg.input {
                        out.push((*input, gi));
                    }
                    out.push((*kernel, cg.kernel));
                    if let Some(b) = bias {
                        out.push((*b, cg.bias));
                    }
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    stride,
                } => {
                    let cg = ops::conv2d_backward(
                        self.value(*input),
                        self.value(*kernel),
                        &g,
                        *stride,
                        self.rg(*input),
                    )?;
                    if let Some(gi) = cg.input {
                        out.push((*input, gi));
                    }
                    out.push((*kernel, cg.kernel));
                    if let Some(b) = bias {
                        out.push((*b, cg.bias));
                    }
                }
                Op::BatchNorm {
                    input,
                    gamma,
                    beta,
                    saved,
                } => {
                    let (gx, gg, gb) = ops::batchnorm_backward(saved, self.value(*gamma), &g)?;
                    out.extend([(*input, gx), (*gamma, gg), (*beta, gb)]);
                }
                Op::Relu { input } => {
                    out.push((*input, ops::relu_backward(self.value(*input), &g)));
                }
                Op::MaxPool1d { input, argmax } => {
                    out.push((
                        *input,
                        ops::maxpool1d_backward(self.value(*input).shape(), argmax, &g),
                    ));
                }
                Op::GlobalAvgPool { input } => {
                    out.push((
                        *input,
                        ops::global_avg_pool_backward(self.value(*input).shape(), &g),
                    ));
                }
                Op::Linear {
                    input,
                    weight,
                    bias,
                } => {
                    let (gx, gw, gb) =
                        ops::linear_backward(self.value(*input), self.value(*weight), &g);
                    out.extend([(*input, gx), (*weight, gw), (*bias, gb)]);
                }
                Op::Add { a, b } => {
                    out.push((*a, g.clone()));
                    out.push((*b, g));
                }
                Op::Mul { a, b } => {
                    let ga = elementwise(&g, self.value(*b));
                    let gb = elementwise(&g, self.value(*a));
                    out.extend([(*a, ga), (*b, gb)]);
                }
                Op::Scale { input, factor } => {
                    let f = *factor;
                    out.push((*input, g.map(|v| v * f)));
                }
                Op::Sum { input } => {
                    let s = self.value(*input).shape().to_vec();
                    out.push((*input, Tensor::full(s, g.data()[0])));
                }
                Op::Concat { parts } => {
                    let channels: Vec<usize> =
                        parts.iter().map(|&p| self.value(p).shape()[1]).collect();
                    for (p, gp) in parts
                        .iter()
                        .zip(ops::concat_channels_backward(&channels, &g))
                    {
                        out.push((*p, gp));
                    }
                }
                Op::CrossEntropy {
                    logits,
                    labels,
                    probs,
                } => {
                    out.push((
                        *logits,
                        ops::softmax_cross_entropy_backward(probs, labels, g.data()[0]),
                    ));
                }
            }
            for (v, gv) in out {
                self.accumulate(v, gv);
            }
        }
        Ok(())
    }

    /// Gradient of the last backward pass with respect to a leaf. Leaves
    /// that did not contribute to the loss get zeros.
    pub fn grad(&self, v: Var) -> Tensor<T> {
        match self.grads.get(v.0).and_then(|g| g.as_ref()) {
            Some(g) => g.clone(),
            None => Tensor::zeros(self.value(v).shape().to_vec()),
        }
    }

    /// Order in which the last backward pass visited nodes.
    pub fn backward_order(&self) -> &[Var] {
        &self.visited
    }
}

fn elementwise<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| x * y)
        .collect();
    Tensor::new(a.shape().to_vec(), data).expect("shape")
}
