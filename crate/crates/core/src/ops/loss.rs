use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let s = logits.shape();
    if s.len() != 2 {
        return Err(Error::shape(
            "softmax",
            format!("logits {s:?} must be [B,K]"),
        ));
    }
    let k = s[1];
    let mut out = Vec::with_capacity(logits.numel());
    for row in logits.data().chunks_exact(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let e: Vec<T> = row.iter().map(|&v| (v - m).exp()).collect();
        let z: T = e.iter().copied().sum();
        out.extend(e.into_iter().map(|v| v / z));
    }
    Tensor::new(s.to_vec(), out)
}

/// Mean negative log-likelihood of `labels` under the softmax of `logits`.
/// Returns the loss and the class probabilities.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(T, Tensor<T>)> {
    let s = logits.shape();
    if s.len() != 2 || s[0] != labels.len() {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits {s:?} with {} labels", labels.len()),
        ));
    }
    let k = s[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Label {
            label: bad,
            classes: k,
        });
    }
    let probs = softmax(logits)?;
    let mut nll = 0.0f64;
    for (row, &y) in logits.data().chunks_exact(k).zip(labels) {
        // log-sum-exp form keeps tiny probabilities exact
        let m = row
            .iter()
            .map(|v| v.f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v.f64() - m).exp()).sum::<f64>().ln();
        nll += lse - row[y].f64();
    }
    Ok((T::of(nll / labels.len() as f64), probs))
}

/// Gradient of the mean loss with respect to the logits, scaled by `upstream`.
pub fn softmax_cross_entropy_backward<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    upstream: T,
) -> Tensor<T> {
    let k = probs.shape()[1];
    let scale = upstream / T::of(labels.len() as f64);
    let mut g = probs.clone();
    for (row, &y) in g.data_mut().chunks_exact_mut(k).zip(labels) {
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_ln_k() {
        let x = Tensor::<f64>::zeros([3, 8]);
        let (loss, p) = softmax_cross_entropy(&x, &[0, 3, 7]).unwrap();
        assert!((loss - 8f64.ln()).abs() < 1e-12);
        assert!(p.data().iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn confident_correct_class() {
        let mut x = Tensor::<f64>::zeros([1, 8]);
        x.data_mut()[5] = 1e4;
        let (loss, _) = softmax_cross_entropy(&x, &[5]).unwrap();
        assert!((0.0..1e-6).contains(&loss));
    }

    #[test]
    fn two_class_closed_form() {
        let x = Tensor::<f64>::new([1, 2], vec![2f64.ln(), 0.0]).unwrap();
        let (loss, p) = softmax_cross_entropy(&x, &[0]).unwrap();
        assert!((p.data()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.data()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!((loss + (2.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn label_out_of_range_rejected() {
        let x = Tensor::<f64>::zeros([1, 8]);
        assert!(matches!(
            softmax_cross_entropy(&x, &[8]),
            Err(Error::Label {
                label: 8,
                classes: 8
            })
        ));
    }
}
