mod common;

use std::collections::HashMap;

use common::*;
use sigclass_core::nn::{
    InceptionConfig, InceptionTime, ModelSpec, Network, ResNet2D, ResNet2DConfig,
};
use sigclass_core::ops::BN_EPS;
use sigclass_core::train::argmax;
use sigclass_core::{GradTape, Mode, Tensor};

/// Activations `[B][C][L]` as nested vectors.
type Act = Vec<Vec<Vec<f64>>>;

fn to_act(t: &Tensor<f64>) -> Act {
    let s = t.shape();
    let (b, c, l) = (s[0], s[1], s[2]);
    (0..b)
        .map(|i| {
            (0..c)
                .map(|j| t.data()[(i * c + j) * l..(i * c + j + 1) * l].to_vec())
                .collect()
        })
        .collect()
}

fn conv(x: &Act, w: &Tensor<f64>) -> Act {
    let (f, c, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
    let pad = (k - 1) / 2;
    let l = x[0][0].len();
    x.iter()
        .map(|xb| {
            (0..f)
                .map(|fi| {
                    (0..l)
                        .map(|t| {
                            let mut acc = 0.0;
                            for ci in 0..c {
                                for ki in 0..k {
                                    let src = t as isize + ki as isize - pad as isize;
                                    if src >= 0 && (src as usize) < l {
                                        acc +=
                                            w.data()[(fi * c + ci) * k + ki] * xb[ci][src as usize];
                                    }
                                }
                            }
                            acc
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn maxpool(x: &Act) -> Act {
    x.iter()
        .map(|xb| {
            xb.iter()
                .map(|row| {
                    (0..row.len())
                        .map(|t| {
                            let lo = t.saturating_sub(1);
                            let hi = (t + 1).min(row.len() - 1);
                            row[lo..=hi]
                                .iter()
                                .cloned()
                                .fold(f64::NEG_INFINITY, f64::max)
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn batchnorm(x: &Act, gamma: &Tensor<f64>, beta: &Tensor<f64>) -> Act {
    let c = x[0].len();
    let mut out = x.clone();
    for ci in 0..c {
        let vals: Vec<f64> = x.iter().flat_map(|xb| xb[ci].iter().cloned()).collect();
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        for ob in out.iter_mut() {
            for v in ob[ci].iter_mut() {
                *v = gamma.data()[ci] * (*v - mean) / (var + BN_EPS).sqrt() + beta.data()[ci];
            }
        }
    }
    out
}

fn relu(x: Act) -> Act {
    x.into_iter()
        .map(|xb| {
            xb.into_iter()
                .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
                .collect()
        })
        .collect()
}

fn add(a: &Act, b: &Act) -> Act {
    a.iter()
        .zip(b)
        .map(|(ab, bb)| {
            ab.iter()
                .zip(bb)
                .map(|(r, s)| r.iter().zip(s).map(|(p, q)| p + q).collect())
                .collect()
        })
        .collect()
}

/// Straight-line InceptionTime forward pass in train mode.
fn reference_logits(
    cfg: &InceptionConfig,
    p: &HashMap<String, Tensor<f64>>,
    input: &Tensor<f64>,
) -> Vec<Vec<f64>> {
    let mut x = to_act(input);
    let mut res = x.clone();
    for d in 0..cfg.depth {
        let name = |s: &str| format!("block{d}.{s}");
        let z = match p.get(&name("bottleneck.weight")) {
            Some(w) => conv(&x, w),
            None => x.clone(),
        };
        let mut branches: Vec<Act> = (0..cfg.kernel_sizes.len())
            .map(|i| conv(&z, &p[&name(&format!("conv{i}.weight"))]))
            .collect();
        branches.push(conv(&maxpool(&x), &p[&name("pool_conv.weight")]));
        let cat: Act = (0..x.len())
            .map(|b| branches.iter().flat_map(|br| br[b].clone()).collect())
            .collect();
        x = relu(batchnorm(&cat, &p[&name("bn.gamma")], &p[&name("bn.beta")]));
        if (d + 1) % cfg.residual_every == 0 {
            let s = conv(&res, &p[&name("shortcut.conv.weight")]);
            let s = batchnorm(
                &s,
                &p[&name("shortcut.bn.gamma")],
                &p[&name("shortcut.bn.beta")],
            );
            x = relu(add(&x, &s));
            res = x.clone();
        }
    }
    let (w, b) = (&p["head.weight"], &p["head.bias"]);
    let (out, inp) = (w.shape()[0], w.shape()[1]);
    x.iter()
        .map(|xb| {
            let feat: Vec<f64> = xb
                .iter()
                .map(|r| r.iter().sum::<f64>() / r.len() as f64)
                .collect();
            (0..out)
                .map(|o| {
                    b.data()[o]
                        + (0..inp)
                            .map(|i| w.data()[o * inp + i] * feat[i])
                            .sum::<f64>()
                })
                .collect()
        })
        .collect()
}

fn jitter(net: &mut dyn Network<f64>, seed: u64) {
    for (i, p) in net.store_mut().params_mut().iter_mut().enumerate() {
        let s = p.value.shape().to_vec();
        if p.name.ends_with(".gamma") {
            p.value = uniform(&s, 0.5, 1.5, seed + i as u64);
        } else if p.name.ends_with(".beta") {
            p.value = uniform(&s, -0.5, 0.5, seed + i as u64);
        }
    }
}

#[test]
fn inception_matches_straight_line_reference() {
    for (in_channels, depth) in [(1, 1), (2, 3), (1, 6)] {
        let cfg = InceptionConfig {
            in_channels,
            n_classes: 4,
            depth,
            nf: 3,
            bottleneck_channels: 2,
            kernel_sizes: vec![7, 5, 3],
            residual_every: 3,
            seq_len: 13,
        };
        let mut net = InceptionTime::<f64>::new(cfg.clone(), 17).unwrap();
        jitter(&mut net, 300);
        let params: HashMap<String, Tensor<f64>> = net
            .store()
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.clone()))
            .collect();
        let x = uniform(&[3, in_channels, 13], -2.0, 2.0, 61);
        let got = net.predict(&x, Mode::Train).unwrap();
        let want = reference_logits(&cfg, &params, &x);
        let diff = got
            .data()
            .chunks(4)
            .zip(&want)
            .flat_map(|(g, w)| g.iter().zip(w).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        assert!(diff < 1e-10, "depth {depth}: max abs diff {diff:e}");
    }
}

#[test]
fn inception_head_and_feature_width() {
    let net = InceptionTime::<f32>::new(InceptionConfig::default(), 0).unwrap();
    assert_eq!(net.config().feature_width(), 128);
    let groups = net.store().groups();
    let head = groups.last().unwrap();
    assert_eq!(head.name, "head");
    assert_eq!(head.numel, 128 * 8 + 8);
    assert_eq!(
        groups.iter().map(|g| g.numel).sum::<usize>(),
        net.store().numel()
    );
}

#[test]
fn forward_shape_for_any_batch() {
    let mut net = InceptionTime::<f64>::new(
        InceptionConfig {
            seq_len: 20,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    for b in [1, 2, 5] {
        let x = uniform(&[b, 1, 20], -1.0, 1.0, b as u64);
        assert_eq!(net.predict(&x, Mode::Eval).unwrap().shape(), &[b, 8]);
    }
}

#[test]
fn circular_shift_changes_logits() {
    let mut net = InceptionTime::<f64>::new(InceptionConfig::default(), 3).unwrap();
    let x = uniform(&[2, 1, 94], -1.0, 1.0, 71);
    let mut shifted = x.clone();
    for row in shifted.data_mut().chunks_mut(94) {
        row.rotate_right(1);
    }
    let a = net.predict(&x, Mode::Eval).unwrap();
    let b = net.predict(&shifted, Mode::Eval).unwrap();
    assert_ne!(a.data(), b.data());
}

#[test]
fn eval_forward_is_pure() {
    for spec in [
        ModelSpec::InceptionTime(InceptionConfig {
            seq_len: 30,
            ..Default::default()
        }),
        ModelSpec::Resnet2d(ResNet2DConfig {
            input_size: (12, 12),
            ..Default::default()
        }),
    ] {
        let mut net = spec.build::<f64>(5).unwrap();
        let mut shape = vec![3];
        shape.extend(net.sample_shape());
        let x = uniform(&shape, -1.0, 1.0, 72);
        let digest = net.store().digest();
        let a = net.predict(&x, Mode::Eval).unwrap();
        let b = net.predict(&x, Mode::Eval).unwrap();
        assert_eq!(a.data(), b.data());
        assert_eq!(net.store().digest(), digest);
    }
}

#[test]
fn every_group_receives_gradient() {
    for spec in [
        ModelSpec::InceptionTime(InceptionConfig {
            seq_len: 30,
            ..Default::default()
        }),
        ModelSpec::Resnet2d(ResNet2DConfig {
            input_size: (12, 12),
            ..Default::default()
        }),
    ] {
        let mut net = spec.build::<f64>(6).unwrap();
        let mut shape = vec![4];
        shape.extend(net.sample_shape());
        let mut tape = GradTape::new();
        let x = tape.leaf(uniform(&shape, -1.0, 1.0, 73), false);
        let f = net.forward(&mut tape, x, Mode::Train).unwrap();
        let loss = tape.cross_entropy(f.logits, &[0, 3, 5, 7]).unwrap();
        tape.backward(loss).unwrap();
        for g in net.store().groups() {
            let norm: f64 = g
                .params
                .iter()
                .map(|&i| {
                    tape.grad(f.params[i])
                        .data()
                        .iter()
                        .map(|v| v * v)
                        .sum::<f64>()
                })
                .sum();
            assert!(norm > 0.0, "group {} has zero gradient", g.name);
        }
    }
}

#[test]
fn resnet_trace_and_batch_independence() {
    let cfg = ResNet2DConfig::default();
    assert_eq!(
        cfg.spatial_trace(),
        vec![(94, 94), (94, 94), (47, 47), (24, 24)]
    );
    let mut net = ResNet2D::<f64>::new(
        ResNet2DConfig {
            input_size: (16, 16),
            ..cfg
        },
        8,
    )
    .unwrap();
    let x8 = uniform(&[8, 3, 16, 16], 0.0, 1.0, 74);
    let x1 = x8.slice_outer(0, 1).unwrap();
    let a = net.predict(&x8, Mode::Eval).unwrap();
    let b = net.predict(&x1, Mode::Eval).unwrap();
    for (p, q) in a.data()[..8].iter().zip(b.data()) {
        assert!((p - q).abs() < 1e-6);
    }
    let shapes = net.trace_shapes(&x1).unwrap();
    assert_eq!(shapes.last().unwrap(), &vec![1, 64, 4, 4]);
}

#[test]
fn untrained_predictions_not_degenerate() {
    let ds = sigclass_core::synth::generate(&Default::default()).unwrap();
    let idx: Vec<usize> = (0..128).collect();
    for seed in 0..5 {
        let mut net = InceptionTime::<f64>::new(InceptionConfig::default(), seed).unwrap();
        let batch = sigclass_core::data::make_batch::<f64>(&ds, &idx).unwrap();
        // batch statistics: the running statistics of a fresh network carry no information
        let logits = net.predict(&batch.inputs, Mode::Train).unwrap();
        let preds: Vec<usize> = logits.data().chunks(8).map(argmax).collect();
        assert!(
            preds.iter().any(|&p| p != preds[0]),
            "seed {seed}: all predictions are {}",
            preds[0]
        );
    }
}
