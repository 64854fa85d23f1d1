//! Same-padded cross-correlation in one and two dimensions.
//!
//! Both lower to matrix products over an unfolded ("im2col") copy of the
//! input, built a few samples (1D) or a band of output rows (2D) at a time
//! so the unfolded block stays cache resident. Input gradients are computed
//! as a forward correlation of the (dilated, for stride 2) output gradient
//! with the flipped, channel-transposed kernel.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Target column count of one unfolded block.
const BLOCK_COLS: usize = 384;

/// Gradients of a convolution with respect to its operands. `input` is only
/// populated when requested.
#[derive(Debug)]
pub struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

fn check_conv1d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 3 || ks.len() != 3 {
        return Err(Error::shape(
            "conv1d",
            format!("input {is:?} must be [B,C,L] and kernel {ks:?} must be [F,C,K]"),
        ));
    }
    if is[1] != ks[1] {
        return Err(Error::shape(
            "conv1d",
            format!(
                "input {is:?} has {} channels, kernel {ks:?} expects {}",
                is[1], ks[1]
            ),
        ));
    }
    if ks[2] % 2 == 0 {
        return Err(Error::shape(
            "conv1d",
            format!("kernel {ks:?} has even width; same padding needs odd K"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [ks[0]] {
            return Err(Error::shape(
                "conv1d",
                format!("bias {:?} does not match kernel {ks:?}", b.shape()),
            ));
        }
    }
    Ok((is[0], is[1], is[2], ks[0], ks[2]))
}

/// Unfold samples `[C,L]` (consecutive in `x`) into `[C·K, S·L]`.
fn im2col_1d<T: Scalar>(x: &[T], s: usize, c: usize, l: usize, k: usize, cols: &mut [T]) {
    let pad = k / 2;
    let n = s * l;
    for ci in 0..c {
        for ki in 0..k {
            let row = &mut cols[(ci * k + ki) * n..(ci * k + ki + 1) * n];
            for si in 0..s {
                let src = &x[(si * c + ci) * l..(si * c + ci + 1) * l];
                let dst = &mut row[si * l..(si + 1) * l];
                // output position p reads input p + ki - pad
                let lo = pad.saturating_sub(ki).min(l);
                let hi = (l + pad).saturating_sub(ki).min(l).max(lo);
                dst[..lo].fill(T::zero());
                dst[lo..hi].copy_from_slice(&src[lo + ki - pad..hi + ki - pad]);
                dst[hi..].fill(T::zero());
            }
        }
    }
}

/// `[F, C, K...]` → `[C, F, K...]` with every spatial axis reversed.
fn flip_kernel<T: Scalar>(kernel: &Tensor<T>) -> Tensor<T> {
    let ks = kernel.shape();
    let (f, c) = (ks[0], ks[1]);
    let taps: usize = ks[2..].iter().product();
    let mut out = vec![T::zero(); kernel.numel()];
    let w = kernel.data();
    for fi in 0..f {
        for ci in 0..c {
            let src = &w[(fi * c + ci) * taps..(fi * c + ci + 1) * taps];
            let dst = &mut out[(ci * f + fi) * taps..(ci * f + fi + 1) * taps];
            for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
                *d = *s;
            }
        }
    }
    let mut shape = ks.to_vec();
    shape.swap(0, 1);
    Tensor::new(shape, out).expect("same element count")
}

fn chunk_samples(l: usize, b: usize) -> usize {
    (BLOCK_COLS / l).clamp(1, b)
}

/// `out[b,f,l] = bias[f] + Σ_c Σ_k kernel[f,c,k] · x[b,c,l+k-(K-1)/2]`
/// with zeros outside the signal.
pub fn conv1d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    let (b, c, l, f, k) = check_conv1d(input, kernel, bias)?;
    let ck = c * k;
    let cs = chunk_samples(l, b);
    let mut out = vec![T::zero(); b * f * l];
    let mut cols = vec![T::zero(); ck * cs * l];
    let mut tmp = vec![T::zero(); f * cs * l];
    for b0 in (0..b).step_by(cs) {
        let s = cs.min(b - b0);
        let n = s * l;
        im2col_1d(
            &input.data()[b0 * c * l..(b0 + s) * c * l],
            s,
            c,
            l,
            k,
            &mut cols[..ck * n],
        );
        if s == 1 {
            T::gemm(
                f,
                ck,
                n,
                T::one(),
                (kernel.data(), ck as isize, 1),
                (&cols[..ck * n], n as isize, 1),
                T::zero(),
                (&mut out[b0 * f * l..(b0 + 1) * f * l], n as isize, 1),
            );
        } else {
            // [F, S·L] staging, scattered into [S, F, L]
            T::gemm(
                f,
                ck,
                n,
                T::one(),
                (kernel.data(), ck as isize, 1),
                (&cols[..ck * n], n as isize, 1),
                T::zero(),
                (&mut tmp[..f * n], n as isize, 1),
            );
            for si in 0..s {
                for fi in 0..f {
                    let src = &tmp[fi * n + si * l..fi * n + (si + 1) * l];
                    let o = ((b0 + si) * f + fi) * l;
                    out[o..o + l].copy_from_slice(src);
                }
            }
        }
    }
    if let Some(bias) = bias {
        for (row, &bv) in out.chunks_exact_mut(l).zip(bias.data().iter().cycle()) {
            for v in row {
                *v += bv;
            }
        }
    }
    Tensor::new([b, f, l], out)
}

pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let (b, c, l, f, k) = check_conv1d(input, kernel, None)?;
    if grad_out.shape() != [b, f, l] {
        return Err(Error::shape(
            "conv1d backward",
            format!("gradient {:?} vs output [{b},{f},{l}]", grad_out.shape()),
        ));
    }
    let ck = c * k;
    let go = grad_out.data();
    let mut gbias = vec![T::zero(); f];
    for (row, gb) in go.chunks_exact(l).zip((0..f).cycle()) {
        gbias[gb] += row.iter().copied().sum::<T>();
    }
    let cs = chunk_samples(l, b);
    let mut cols = vec![T::zero(); ck * cs * l];
    let mut gp = vec![T::zero(); f * cs * l];
    let mut gk = vec![T::zero(); f * ck];
    for b0 in (0..b).step_by(cs) {
        let s = cs.min(b - b0);
        let n = s * l;
        im2col_1d(
            &input.data()[b0 * c * l..(b0 + s) * c * l],
            s,
            c,
            l,
            k,
            &mut cols[..ck * n],
        );
        // gradient rows gathered as [F, S·L]
        for si in 0..s {
            for fi in 0..f {
                let o = ((b0 + si) * f + fi) * l;
                gp[fi * n + si * l..fi * n + (si + 1) * l].copy_from_slice(&go[o..o + l]);
            }
        }
        T::gemm(
            f,
            n,
            ck,
            T::one(),
            (&gp[..f * n], n as isize, 1),
            (&cols[..ck * n], 1, n as isize),
            T::one(),
            (&mut gk, ck as isize, 1),
        );
    }
    let gin = if need_input {
        Some(conv1d(grad_out, &flip_kernel(kernel), None)?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: gin,
        kernel: Tensor::new([f, c, k], gk)?,
        bias: Tensor::new([f], gbias)?,
    })
}

/// Geometry of a same-padded 2D convolution.
#[derive(Clone, Copy, Debug)]
struct Geom2d {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    oh: usize,
    ow: usize,
}

impl Geom2d {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn out_px(&self) -> usize {
        self.oh * self.ow
    }
    /// Output rows per unfolded band.
    fn band(&self) -> usize {
        (BLOCK_COLS * 2 / self.ow).clamp(1, self.oh)
    }
}

fn check_conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Geom2d> {
    let (is, ks) = (input.shape(), kernel.shape());
    if is.len() != 4 || ks.len() != 4 {
        return Err(Error::shape(
            "conv2d",
            format!("input {is:?} must be [B,C,H,W] and kernel {ks:?} must be [F,C,Kh,Kw]"),
        ));
    }
    if is[1] != ks[1] {
        return Err(Error::shape(
            "conv2d",
            format!(
                "input {is:?} has {} channels, kernel {ks:?} expects {}",
                is[1], ks[1]
            ),
        ));
    }
    if ks[2] % 2 == 0 || ks[3] % 2 == 0 {
        return Err(Error::shape(
            "conv2d",
            format!("kernel {ks:?} has an even side; same padding needs odd sizes"),
        ));
    }
    if !(1..=2).contains(&stride) {
        return Err(Error::shape(
            "conv2d",
            format!("stride {stride} not in {{1,2}}"),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [ks[0]] {
            return Err(Error::shape(
                "conv2d",
                format!("bias {:?} does not match kernel {ks:?}", b.shape()),
            ));
        }
    }
    Ok(Geom2d {
        b: is[0],
        c: is[1],
        h: is[2],
        w: is[3],
        f: ks[0],
        kh: ks[2],
        kw: ks[3],
        stride,
        oh: is[2].div_ceil(stride),
        ow: is[3].div_ceil(stride),
    })
}

/// Unfold output rows `oy0..oy1` of one image `[C,H,W]` into
/// `[C·Kh·Kw, (oy1−oy0)·Ow]`.
fn im2col_2d<T: Scalar>(x: &[T], g: &Geom2d, oy0: usize, oy1: usize, cols: &mut [T]) {
    let (ph, pw) = (g.kh / 2, g.kw / 2);
    let npx = (oy1 - oy0) * g.ow;
    for ci in 0..g.c {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((ci * g.kh + ki) * g.kw + kj) * npx;
                let dst = &mut cols[row..row + npx];
                for oy in oy0..oy1 {
                    let iy = (oy * g.stride + ki) as isize - ph as isize;
                    let line = &mut dst[(oy - oy0) * g.ow..(oy - oy0 + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    if g.stride == 1 {
                        // ix = ox + kj - pw
                        let lo = pw.saturating_sub(kj).min(g.ow);
                        let hi = (g.w + pw).saturating_sub(kj).min(g.ow).max(lo);
                        line[..lo].fill(T::zero());
                        line[lo..hi].copy_from_slice(&src[lo + kj - pw..hi + kj - pw]);
                        line[hi..].fill(T::zero());
                        continue;
                    }
                    for (ox, d) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - pw as isize;
                        *d = if ix < 0 || ix >= g.w as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Same-padded 2D cross-correlation; output spatial size is `ceil(H/s) × ceil(W/s)`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = check_conv2d(input, kernel, bias, stride)?;
    let (rows, npx) = (g.rows(), g.out_px());
    let in_img = g.c * g.h * g.w;
    let out_img = g.f * npx;
    let band = g.band();
    let mut out = vec![T::zero(); g.b * out_img];
    let mut cols = vec![T::zero(); rows * band * g.ow];
    for bi in 0..g.b {
        let x = &input.data()[bi * in_img..(bi + 1) * in_img];
        let dst = &mut out[bi * out_img..(bi + 1) * out_img];
        for oy0 in (0..g.oh).step_by(band) {
            let oy1 = (oy0 + band).min(g.oh);
            let n = (oy1 - oy0) * g.ow;
            im2col_2d(x, &g, oy0, oy1, &mut cols[..rows * n]);
            let start = oy0 * g.ow;
            T::gemm(
                g.f,
                rows,
                n,
                T::one(),
                (kernel.data(), rows as isize, 1),
                (&cols[..rows * n], n as isize, 1),
                T::zero(),
                (&mut dst[start..], npx as isize, 1),
            );
        }
        if let Some(bias) = bias {
            for (fi, &bv) in bias.data().iter().enumerate() {
                for v in &mut dst[fi * npx..(fi + 1) * npx] {
                    *v += bv;
                }
            }
        }
    }
    Tensor::new([g.b, g.f, g.oh, g.ow], out)
}

/// Spread a stride-2 output gradient onto the input grid, zeros between.
fn dilate<T: Scalar>(grad: &Tensor<T>, g: &Geom2d) -> Tensor<T> {
    let mut out = vec![T::zero(); g.b * g.f * g.h * g.w];
    for (plane, src) in out
        .chunks_exact_mut(g.h * g.w)
        .zip(grad.data().chunks_exact(g.out_px()))
    {
        for oy in 0..g.oh {
            for ox in 0..g.ow {
                plane[oy * g.stride * g.w + ox * g.stride] = src[oy * g.ow + ox];
            }
        }
    }
    Tensor::new([g.b, g.f, g.h, g.w], out).expect("input-sized")
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let g = check_conv2d(input, kernel, None, stride)?;
    if grad_out.shape() != [g.b, g.f, g.oh, g.ow] {
        return Err(Error::shape(
            "conv2d backward",
            format!(
                "gradient {:?} vs output [{},{},{},{}]",
                grad_out.shape(),
                g.b,
                g.f,
                g.oh,
                g.ow
            ),
        ));
    }
    let (rows, npx) = (g.rows(), g.out_px());
    let in_img = g.c * g.h * g.w;
    let out_img = g.f * npx;
    let band = g.band();
    let mut gk = vec![T::zero(); g.f * rows];
    let mut gbias = vec![T::zero(); g.f];
    let mut cols = vec![T::zero(); rows * band * g.ow];
    for bi in 0..g.b {
        let x = &input.data()[bi * in_img..(bi + 1) * in_img];
        let go = &grad_out.data()[bi * out_img..(bi + 1) * out_img];
        for (fi, gb) in gbias.iter_mut().enumerate() {
            *gb += go[fi * npx..(fi + 1) * npx].iter().copied().sum::<T>();
        }
        for oy0 in (0..g.oh).step_by(band) {
            let oy1 = (oy0 + band).min(g.oh);
            let n = (oy1 - oy0) * g.ow;
            im2col_2d(x, &g, oy0, oy1, &mut cols[..rows * n]);
            T::gemm(
                g.f,
                n,
                rows,
                T::one(),
                (&go[oy0 * g.ow..], npx as isize, 1),
                (&cols[..rows * n], 1, n as isize),
                T::one(),
                (&mut gk, rows as isize, 1),
            );
        }
    }
    let gin = if need_input {
        let flipped = flip_kernel(kernel);
        Some(if stride == 1 {
            conv2d(grad_out, &flipped, None, 1)?
        } else {
            conv2d(&dilate(grad_out, &g), &flipped, None, 1)?
        })
    } else {
        None
    };
    Ok(ConvGrads {
        input: gin,
        kernel: Tensor::new([g.f, g.c, g.kh, g.kw], gk)?,
        bias: Tensor::new([g.f], gbias)?,
    })
}
