use crate::error::{Error, Result};
use crate::nn::Param;
use crate::tensor::{Scalar, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.99;
pub const ADAM_EPS: f64 = 1e-5;

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Param<T>]) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        };
        AdamState {
            m: zeros(),
            v: zeros(),
            step: 0,
        }
    }
}

/// One Adam update with decoupled weight decay:
/// `p ← p·(1 − lr·wd)`, then `p ← p − lr·m̂/(√v̂ + eps)` with bias-corrected
/// moments. `lrs[i]` is the rate of parameter `i`.
pub fn adam_step<T: Scalar>(
    params: &mut [Param<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lrs: &[f64],
    weight_decay: f64,
) -> Result<()> {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), lrs.len());
    if let Some((p, _)) = params.iter().zip(grads).find(|(_, g)| !g.is_finite()) {
        return Err(Error::NonFinite(format!(
            "gradient of parameter {}",
            p.name
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - BETA1.powi(t);
    let bc2 = 1.0 - BETA2.powi(t);
    let (b1, b2) = (T::of(BETA1), T::of(BETA2));
    let (one_b1, one_b2) = (T::of(1.0 - BETA1), T::of(1.0 - BETA2));
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let lr = lrs[i];
        let decay = T::of(1.0 - lr * weight_decay);
        let step = T::of(lr / bc1);
        let inv_bc2 = T::of(1.0 / bc2);
        let eps = T::of(ADAM_EPS);
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *w *= decay;
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            *w -= step * *mi / ((*vi * inv_bc2).sqrt() + eps);
        }
    }
    Ok(())
}
