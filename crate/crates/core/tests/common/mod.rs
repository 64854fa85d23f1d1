#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use sigclass_core::gradcheck::{max_rel_err, numeric_grad};
use sigclass_core::nn::Network;
use sigclass_core::{GradTape, Mode, Result, Tensor, Var};

pub const H: f64 = 1e-5;

pub fn rng(seed: u64) -> Pcg64 {
    Pcg64::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// Values with magnitude in [0.2, 1] and random sign, so no element sits
/// near a ReLU kink.
pub fn away_from_zero(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| {
        let m = r.random_range(0.2..1.0);
        if r.random_bool(0.5) {
            m
        } else {
            -m
        }
    })
}

/// Distinct values spaced at least 0.05 apart, in random order.
pub fn distinct(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut vals: Vec<f64> = (0..n).map(|i| -1.0 + 0.05 * i as f64).collect();
    let mut r = rng(seed);
    for i in (1..n).rev() {
        vals.swap(i, r.random_range(0..=i));
    }
    Tensor::new(shape.to_vec(), vals).unwrap()
}

type Build<'a> = &'a dyn Fn(&mut GradTape<f64>, &[Var]) -> Result<Var>;

fn scalar_loss(
    xs: &[Tensor<f64>],
    build: Build,
    weights: &Tensor<f64>,
) -> (GradTape<f64>, Vec<Var>, Var) {
    let mut tape = GradTape::new();
    let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
    let out = build(&mut tape, &vars).unwrap();
    let w = tape.leaf(weights.clone(), false);
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod);
    (tape, vars, loss)
}

/// Worst relative error over all inputs between tape gradients and central
/// differences of `Σ r ⊙ build(xs)`, with fixed random weights `r`.
pub fn check_op(xs: &[Tensor<f64>], build: Build) -> f64 {
    let shape = {
        let mut tape = GradTape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone(), true)).collect();
        let out = build(&mut tape, &vars).unwrap();
        tape.value(out).shape().to_vec()
    };
    let weights = uniform(&shape, -1.0, 1.0, 991);
    let (mut tape, vars, loss) = scalar_loss(xs, build, &weights);
    tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let analytic = tape.grad(vars[i]);
        let numeric = numeric_grad(x, H, |probe| {
            let mut ys = xs.to_vec();
            ys[i] = probe.clone();
            let (t, _, l) = scalar_loss(&ys, build, &weights);
            t.value(l).data()[0]
        });
        worst = worst.max(max_rel_err(&analytic, &numeric));
    }
    worst
}

/// Train-mode cross-entropy of a network; running statistics are restored
/// after every pass so each evaluation sees the same state.
fn net_loss(
    net: &mut dyn Network<f64>,
    x: &Tensor<f64>,
    labels: &[usize],
) -> (GradTape<f64>, Var, Vec<Var>, Var) {
    let saved = net.store().stats().to_vec();
    let mut tape = GradTape::new();
    let input = tape.leaf(x.clone(), true);
    let f = net.forward(&mut tape, input, Mode::Train).unwrap();
    let loss = tape.cross_entropy(f.logits, labels).unwrap();
    net.store_mut().stats_mut().clone_from_slice(&saved);
    (tape, input, f.params, loss)
}

/// Worst relative error over the input and every parameter of a network.
pub fn check_network(net: &mut dyn Network<f64>, x: &Tensor<f64>, labels: &[usize]) -> f64 {
    let (mut tape, input, params, loss) = net_loss(net, x, labels);
    tape.backward(loss).unwrap();
    let numeric = numeric_grad(x, H, |probe| {
        let (t, _, _, l) = net_loss(net, probe, labels);
        t.value(l).data()[0]
    });
    let mut worst = max_rel_err(&tape.grad(input), &numeric);
    for (i, pv) in params.iter().enumerate() {
        let orig = net.store().params()[i].value.clone();
        let numeric = numeric_grad(&orig, H, |probe| {
            net.store_mut().params_mut()[i].value = probe.clone();
            let (t, _, _, l) = net_loss(net, x, labels);
            t.value(l).data()[0]
        });
        net.store_mut().params_mut()[i].value = orig;
        worst = worst.max(max_rel_err(&tape.grad(*pv), &numeric));
    }
    worst
}
