//! Per-channel batch normalization over `[B, C, ...]` tensors.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Running mean and variance for one normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T> {
    pub mean: Tensor<T>,
    pub var: Tensor<T>,
}

impl<T: Scalar> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: Tensor::zeros([channels]),
            var: Tensor::full([channels], T::one()),
        }
    }
}

/// Values saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BnSaved<T> {
    /// Normalized input before the affine transform.
    pub xhat: Tensor<T>,
    /// `1/sqrt(var + eps)` per channel, from batch statistics in train mode
    /// and running statistics in eval mode.
    pub inv_std: Vec<T>,
    pub mode: Mode,
}

const LANES: usize = 8;

/// `Σ f(a_i, b_i)` in double precision with independent partial sums, so
/// the loop vectorizes while the summation order stays fixed.
#[inline]
fn reduce2<T: Scalar>(a: &[T], b: &[T], f: impl Fn(f64, f64) -> f64) -> f64 {
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (xa, xb) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += f(xa[l].f64(), xb[l].f64());
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| f(x.f64(), y.f64())).sum();
    acc.iter().sum::<f64>() + tail
}

fn dims<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    let s = x.shape();
    if s.len() < 2 {
        return Err(Error::shape(
            "batchnorm",
            format!("input {s:?} must be [B,C,...]"),
        ));
    }
    let c = s[1];
    if gamma.shape() != [c] || beta.shape() != [c] {
        return Err(Error::shape(
            "batchnorm",
            format!(
                "input {s:?} has {c} channels, gamma {:?} beta {:?}",
                gamma.shape(),
                beta.shape()
            ),
        ));
    }
    Ok((s[0], c, s[2..].iter().product()))
}

/// Normalize each channel over batch and spatial positions. In train mode
/// the batch statistics (biased variance) are used and the running
/// statistics move toward them with `momentum`; the running variance tracks
/// the unbiased estimate. In eval mode the running statistics are used.
pub fn batchnorm<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running: &mut RunningStats<T>,
    mode: Mode,
) -> Result<(Tensor<T>, BnSaved<T>)> {
    let (b, c, s) = dims(x, gamma, beta)?;
    let n = b * s;
    let xd = x.data();
    let eps = BN_EPS;
    let mut inv_std = vec![T::zero(); c];
    let mut mean = vec![0.0f64; c];
    match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::shape(
                    "batchnorm",
                    format!(
                        "train mode needs at least 2 values per channel, input {:?}",
                        x.shape()
                    ),
                ));
            }
            let m = BN_MOMENTUM;
            for ci in 0..c {
                let row = |bi: usize| &xd[(bi * c + ci) * s..(bi * c + ci + 1) * s];
                let sum: f64 = (0..b).map(|bi| reduce2(row(bi), row(bi), |v, _| v)).sum();
                let mu = sum / n as f64;
                let ss: f64 = (0..b)
                    .map(|bi| reduce2(row(bi), row(bi), |v, _| (v - mu) * (v - mu)))
                    .sum();
                let var = ss / n as f64;
                mean[ci] = mu;
                inv_std[ci] = T::of(1.0 / (var + eps).sqrt());
                let rm = &mut running.mean.data_mut()[ci];
                *rm = T::of((1.0 - m) * rm.f64() + m * mu);
                let rv = &mut running.var.data_mut()[ci];
                *rv = T::of((1.0 - m) * rv.f64() + m * ss / (n - 1) as f64);
            }
        }
        Mode::Eval => {
            for ci in 0..c {
                mean[ci] = running.mean.data()[ci].f64();
                inv_std[ci] = T::of(1.0 / (running.var.data()[ci].f64() + eps).sqrt());
            }
        }
    }
    let mut xhat = vec![T::zero(); xd.len()];
    let mut out = vec![T::zero(); xd.len()];
    for bi in 0..b {
        for ci in 0..c {
            let (g, bt, mu, is) = (
                gamma.data()[ci],
                beta.data()[ci],
                T::of(mean[ci]),
                inv_std[ci],
            );
            let range = (bi * c + ci) * s..(bi * c + ci + 1) * s;
            for ((h, o), &v) in xhat[range.clone()]
                .iter_mut()
                .zip(&mut out[range.clone()])
                .zip(&xd[range])
            {
                *h = (v - mu) * is;
                *o = g * *h + bt;
            }
        }
    }
    let shape = x.shape().to_vec();
    Ok((
        Tensor::new(shape.clone(), out)?,
        BnSaved {
            xhat: Tensor::new(shape, xhat)?,
            inv_std,
            mode,
        },
    ))
}

/// Returns `(d input, d gamma, d beta)`.
pub fn batchnorm_backward<T: Scalar>(
    saved: &BnSaved<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let shape = saved.xhat.shape();
    if grad_out.shape() != shape {
        return Err(Error::shape(
            "batchnorm backward",
            format!("gradient {:?} vs input {shape:?}", grad_out.shape()),
        ));
    }
    let (b, c) = (shape[0], shape[1]);
    let s: usize = shape[2..].iter().product();
    let n = (b * s) as f64;
    let (xh, go) = (saved.xhat.data(), grad_out.data());
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    let mut gx = vec![T::zero(); xh.len()];
    for ci in 0..c {
        let (mut sum_dy, mut sum_dy_xh) = (0.0f64, 0.0f64);
        for bi in 0..b {
            let r = (bi * c + ci) * s..(bi * c + ci + 1) * s;
            sum_dy += reduce2(&go[r.clone()], &go[r.clone()], |dy, _| dy);
            sum_dy_xh += reduce2(&go[r.clone()], &xh[r], |dy, h| dy * h);
        }
        gb[ci] = T::of(sum_dy);
        gg[ci] = T::of(sum_dy_xh);
        let g = gamma.data()[ci];
        let is = saved.inv_std[ci];
        match saved.mode {
            Mode::Train => {
                // dx = g·is/N · (N·dy − Σdy − xhat·Σ(dy·xhat))
                let k = g * is;
                let mean_dy = T::of(sum_dy / n);
                let mean_dy_xh = T::of(sum_dy_xh / n);
                for bi in 0..b {
                    let r = (bi * c + ci) * s..(bi * c + ci + 1) * s;
                    for ((d, &dy), &h) in gx[r.clone()].iter_mut().zip(&go[r.clone()]).zip(&xh[r]) {
                        *d = k * (dy - mean_dy - h * mean_dy_xh);
                    }
                }
            }
            Mode::Eval => {
                let k = g * is;
                for bi in 0..b {
                    let r = (bi * c + ci) * s..(bi * c + ci + 1) * s;
                    for (d, &dy) in gx[r.clone()].iter_mut().zip(&go[r]) {
                        *d = k * dy;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(shape.to_vec(), gx)?,
        Tensor::new([c], gg)?,
        Tensor::new([c], gb)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn constant_channel_maps_to_beta() {
        let x = Tensor::<f64>::full([4, 2, 5], 3.7);
        let gamma = Tensor::new([2], vec![1.5, -2.0]).unwrap();
        let beta = Tensor::new([2], vec![0.25, -0.5]).unwrap();
        let mut rs = RunningStats::new(2);
        let (y, _) = batchnorm(&x, &gamma, &beta, &mut rs, Mode::Train).unwrap();
        for bi in 0..4 {
            for ci in 0..2 {
                for v in &y.data()[(bi * 2 + ci) * 5..(bi * 2 + ci + 1) * 5] {
                    assert_eq!(*v, beta.data()[ci]);
                }
            }
        }
    }

    #[test]
    fn standardized_input_passes_through() {
        // per channel: values ±1, zero mean, unit biased variance
        let x = Tensor::<f64>::from_fn([2, 1, 2], |i| if i % 2 == 0 { 1.0 } else { -1.0 });
        let mut rs = RunningStats::new(1);
        let (y, _) = batchnorm(
            &x,
            &Tensor::full([1], 1.0),
            &Tensor::zeros([1]),
            &mut rs,
            Mode::Train,
        )
        .unwrap();
        let f = 1.0 / (1.0f64 + BN_EPS).sqrt();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b * f).abs() < 1e-15);
        }
    }

    #[test]
    fn random_input_moments() {
        let mut rng = rand_pcg::Pcg64::seed_from_u64(3);
        let x = Tensor::<f64>::from_fn([8, 3, 13], |_| rng.random_range(-4.0..9.0));
        let mut rs = RunningStats::new(3);
        let (y, _) = batchnorm(
            &x,
            &Tensor::full([3], 1.0),
            &Tensor::zeros([3]),
            &mut rs,
            Mode::Train,
        )
        .unwrap();
        for ci in 0..3 {
            let vals: Vec<f64> = (0..8)
                .flat_map(|b| y.data()[(b * 3 + ci) * 13..(b * 3 + ci + 1) * 13].to_vec())
                .collect();
            let mu = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mu.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn running_stats_update_and_eval_defaults() {
        let x = Tensor::<f64>::new([2, 1, 1], vec![1.0, 3.0]).unwrap();
        let gamma = Tensor::full([1], 1.0);
        let beta = Tensor::zeros([1]);
        let mut rs = RunningStats::new(1);
        // eval before any training uses mean 0 var 1
        let (y, _) = batchnorm(&x, &gamma, &beta, &mut rs.clone(), Mode::Eval).unwrap();
        let f = 1.0 / (1.0 + BN_EPS).sqrt();
        assert!((y.data()[1] - 3.0 * f).abs() < 1e-12);
        batchnorm(&x, &gamma, &beta, &mut rs, Mode::Train).unwrap();
        assert!((rs.mean.data()[0] - 0.2).abs() < 1e-12);
        // unbiased batch variance 2 → 0.9 + 0.2
        assert!((rs.var.data()[0] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn train_mode_rejects_single_value() {
        let x = Tensor::<f64>::zeros([1, 2, 1]);
        let mut rs = RunningStats::new(2);
        assert!(batchnorm(
            &x,
            &Tensor::full([2], 1.0),
            &Tensor::zeros([2]),
            &mut rs,
            Mode::Train
        )
        .is_err());
    }
}
