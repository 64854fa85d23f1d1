use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Width-3, stride-1 max pooling with same padding. Padded positions hold
/// −∞ and never win. Returns the output and the winning source index of
/// each output element (first maximum in window order on ties).
pub fn maxpool1d<T: Scalar>(x: &Tensor<T>) -> Result<(Tensor<T>, Vec<u32>)> {
    let s = x.shape();
    if s.len() != 3 {
        return Err(Error::shape(
            "maxpool1d",
            format!("input {s:?} must be [B,C,L]"),
        ));
    }
    let l = s[2];
    let mut out = vec![T::zero(); x.numel()];
    let mut arg = vec![0u32; x.numel()];
    for (row, (o, a)) in x
        .data()
        .chunks_exact(l)
        .zip(out.chunks_exact_mut(l).zip(arg.chunks_exact_mut(l)))
    {
        for p in 0..l {
            let mut best = T::neg_infinity();
            let mut bi = p;
            for q in p.saturating_sub(1)..(p + 2).min(l) {
                if row[q] > best {
                    best = row[q];
                    bi = q;
                }
            }
            o[p] = best;
            a[p] = bi as u32;
        }
    }
    Ok((Tensor::new(s.to_vec(), out)?, arg))
}

pub fn maxpool1d_backward<T: Scalar>(
    shape: &[usize],
    argmax: &[u32],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let l = shape[2];
    let mut g = vec![T::zero(); grad_out.numel()];
    for ((gr, go), am) in g
        .chunks_exact_mut(l)
        .zip(grad_out.data().chunks_exact(l))
        .zip(argmax.chunks_exact(l))
    {
        for p in 0..l {
            gr[am[p] as usize] += go[p];
        }
    }
    Tensor::new(shape.to_vec(), g).expect("shape preserved")
}

/// Mean over every axis after the first two: `[B,C,...] → [B,C]`.
pub fn global_avg_pool<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let s = x.shape();
    if s.len() < 3 {
        return Err(Error::shape(
            "global_avg_pool",
            format!("input {s:?} must be [B,C,L] or [B,C,H,W]"),
        ));
    }
    let inner: usize = s[2..].iter().product();
    let denom = T::of(inner as f64);
    let out = x
        .data()
        .chunks_exact(inner)
        .map(|c| c.iter().copied().sum::<T>() / denom)
        .collect();
    Tensor::new([s[0], s[1]], out)
}

pub fn global_avg_pool_backward<T: Scalar>(shape: &[usize], grad_out: &Tensor<T>) -> Tensor<T> {
    let inner: usize = shape[2..].iter().product();
    let denom = T::of(inner as f64);
    let mut g = Vec::with_capacity(inner * grad_out.numel());
    for &v in grad_out.data() {
        g.extend(std::iter::repeat_n(v / denom, inner));
    }
    Tensor::new(shape.to_vec(), g).expect("shape preserved")
}
