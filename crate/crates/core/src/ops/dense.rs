use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(x: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let g = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(x.shape().to_vec(), g).expect("shape preserved")
}

/// `y = x·Wᵀ + b` for `x: [B,N]`, `W: [M,N]`, `b: [M]`.
pub fn linear<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] || b.shape() != [ws[0]] {
        return Err(Error::shape(
            "linear",
            format!("input {xs:?}, weight {ws:?}, bias {:?}", b.shape()),
        ));
    }
    let (bn, n, m) = (xs[0], xs[1], ws[0]);
    let mut out: Vec<T> = (0..bn).flat_map(|_| b.data().iter().copied()).collect();
    T::gemm(
        bn,
        n,
        m,
        T::one(),
        (x.data(), n as isize, 1),
        (w.data(), 1, n as isize),
        T::one(),
        (&mut out, m as isize, 1),
    );
    Tensor::new([bn, m], out)
}

/// Returns `(d x, d W, d b)`.
pub fn linear_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Tensor<T>) {
    let (bn, n) = (x.shape()[0], x.shape()[1]);
    let m = w.shape()[0];
    let go = grad_out.data();
    let mut gx = vec![T::zero(); bn * n];
    T::gemm(
        bn,
        m,
        n,
        T::one(),
        (go, m as isize, 1),
        (w.data(), n as isize, 1),
        T::zero(),
        (&mut gx, n as isize, 1),
    );
    let mut gw = vec![T::zero(); m * n];
    T::gemm(
        m,
        bn,
        n,
        T::one(),
        (go, 1, m as isize),
        (x.data(), n as isize, 1),
        T::zero(),
        (&mut gw, n as isize, 1),
    );
    let mut gb = vec![T::zero(); m];
    for row in go.chunks_exact(m) {
        for (a, &v) in gb.iter_mut().zip(row) {
            *a += v;
        }
    }
    (
        Tensor::new([bn, n], gx).expect("shape"),
        Tensor::new([m, n], gw).expect("shape"),
        Tensor::new([m], gb).expect("shape"),
    )
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "add",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Concatenate `[B, Ci, ...]` tensors along the channel axis.
pub fn concat_channels<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = parts
        .first()
        .ok_or_else(|| Error::shape("concat", "no inputs"))?
        .shape();
    let b = first[0];
    let rest = &first[2..];
    for p in parts {
        let s = p.shape();
        if s.len() != first.len() || s[0] != b || &s[2..] != rest {
            return Err(Error::shape("concat", format!("{first:?} vs {s:?}")));
        }
    }
    let inner: usize = rest.iter().product();
    let c_total: usize = parts.iter().map(|p| p.shape()[1]).sum();
    let mut out = Vec::with_capacity(b * c_total * inner);
    for bi in 0..b {
        for p in parts {
            let chunk = p.shape()[1] * inner;
            out.extend_from_slice(&p.data()[bi * chunk..(bi + 1) * chunk]);
        }
    }
    let mut shape = first.to_vec();
    shape[1] = c_total;
    Tensor::new(shape, out)
}

/// Split a channel-concatenated gradient back into per-part gradients.
pub fn concat_channels_backward<T: Scalar>(
    channels: &[usize],
    grad_out: &Tensor<T>,
) -> Vec<Tensor<T>> {
    let s = grad_out.shape();
    let b = s[0];
    let inner: usize = s[2..].iter().product();
    let c_total: usize = channels.iter().sum();
    let mut outs: Vec<Vec<T>> = channels
        .iter()
        .map(|c| Vec::with_capacity(b * c * inner))
        .collect();
    for bi in 0..b {
        let mut off = bi * c_total * inner;
        for (o, &c) in outs.iter_mut().zip(channels) {
            o.extend_from_slice(&grad_out.data()[off..off + c * inner]);
            off += c * inner;
        }
    }
    outs.into_iter()
        .zip(channels)
        .map(|(v, &c)| {
            let mut shape = s.to_vec();
            shape[1] = c;
            Tensor::new(shape, v).expect("shape")
        })
        .collect()
}
