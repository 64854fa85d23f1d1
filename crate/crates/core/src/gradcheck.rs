//! Central finite-difference gradient checking.

use crate::tensor::Tensor;

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Estimate `d f / d x` by central differences with step `h`, perturbing
/// each element of `x` in turn.
pub fn numeric_grad(
    x: &Tensor<f64>,
    h: f64,
    mut f: impl FnMut(&Tensor<f64>) -> f64,
) -> Tensor<f64> {
    let mut probe = x.clone();
    let mut g = Tensor::zeros(x.shape().to_vec());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe);
        probe.data_mut()[i] = orig - h;
        let down = f(&probe);
        probe.data_mut()[i] = orig;
        g.data_mut()[i] = (up - down) / (2.0 * h);
    }
    g
}

/// Largest [`rel_err`] between an analytic and a numeric gradient.
pub fn max_rel_err(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape());
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &n)| rel_err(a, n))
        .fold(0.0, f64::max)
}
