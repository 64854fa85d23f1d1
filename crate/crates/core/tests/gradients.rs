mod common;

use common::*;
use sigclass_core::nn::{InceptionConfig, InceptionTime, Network, ResNet2D, ResNet2DConfig};
use sigclass_core::ops::RunningStats;
use sigclass_core::{Mode, Tensor};

const TOL: f64 = 1e-4;

fn assert_ok(name: &str, err: f64) {
    assert!(err < TOL, "{name}: max relative error {err:e}");
}

#[test]
fn conv1d_input_kernel_bias() {
    for (k, seed) in [(1, 1), (3, 2), (5, 3)] {
        let xs = [
            uniform(&[2, 3, 9], -1.0, 1.0, seed),
            uniform(&[4, 3, k], -1.0, 1.0, seed + 10),
            uniform(&[4], -1.0, 1.0, seed + 20),
        ];
        let err = check_op(&xs, &|t, v| t.conv1d(v[0], v[1], Some(v[2])));
        assert_ok(&format!("conv1d k={k}"), err);
    }
}

#[test]
fn conv2d_stride_one_and_two() {
    for (stride, h, w) in [(1, 5, 6), (2, 5, 6), (2, 6, 7)] {
        let xs = [
            uniform(&[2, 2, h, w], -1.0, 1.0, 4),
            uniform(&[3, 2, 3, 3], -1.0, 1.0, 5),
            uniform(&[3], -1.0, 1.0, 6),
        ];
        let err = check_op(&xs, &|t, v| t.conv2d(v[0], v[1], Some(v[2]), stride));
        assert_ok(&format!("conv2d stride {stride} {h}x{w}"), err);
    }
    let xs = [
        uniform(&[2, 3, 5, 5], -1.0, 1.0, 7),
        uniform(&[4, 3, 1, 1], -1.0, 1.0, 8),
    ];
    assert_ok(
        "conv2d 1x1 stride 2",
        check_op(&xs, &|t, v| t.conv2d(v[0], v[1], None, 2)),
    );
}

#[test]
fn batchnorm_train_and_eval() {
    for mode in [Mode::Train, Mode::Eval] {
        let xs = [
            uniform(&[3, 2, 5], -2.0, 2.0, 11),
            uniform(&[2], 0.5, 1.5, 12),
            uniform(&[2], -0.5, 0.5, 13),
        ];
        let err = check_op(&xs, &|t, v| {
            let mut stats = RunningStats::new(2);
            stats.mean = Tensor::new([2], vec![0.3, -0.2]).unwrap();
            stats.var = Tensor::new([2], vec![1.7, 0.6]).unwrap();
            t.batchnorm(v[0], v[1], v[2], &mut stats, mode)
        });
        assert_ok(&format!("batchnorm {mode:?}"), err);
    }
    let xs = [
        uniform(&[2, 3, 3, 4], -1.0, 1.0, 14),
        uniform(&[3], 0.5, 1.5, 15),
        uniform(&[3], -0.5, 0.5, 16),
    ];
    let err = check_op(&xs, &|t, v| {
        t.batchnorm(v[0], v[1], v[2], &mut RunningStats::new(3), Mode::Train)
    });
    assert_ok("batchnorm 2d", err);
}

#[test]
fn relu_and_pools() {
    let x = [away_from_zero(&[2, 3, 7], 21)];
    assert_ok("relu", check_op(&x, &|t, v| Ok(t.relu(v[0]))));
    let x = [distinct(&[2, 3, 7], 22)];
    assert_ok("maxpool1d", check_op(&x, &|t, v| t.maxpool1d(v[0])));
    let x = [uniform(&[2, 3, 7], -1.0, 1.0, 23)];
    assert_ok(
        "global_avg_pool 1d",
        check_op(&x, &|t, v| t.global_avg_pool(v[0])),
    );
    let x = [uniform(&[2, 3, 4, 5], -1.0, 1.0, 24)];
    assert_ok(
        "global_avg_pool 2d",
        check_op(&x, &|t, v| t.global_avg_pool(v[0])),
    );
}

#[test]
fn dense_and_elementwise() {
    let xs = [
        uniform(&[3, 5], -1.0, 1.0, 31),
        uniform(&[4, 5], -1.0, 1.0, 32),
        uniform(&[4], -1.0, 1.0, 33),
    ];
    assert_ok("linear", check_op(&xs, &|t, v| t.linear(v[0], v[1], v[2])));
    let xs = [
        uniform(&[2, 3, 4], -1.0, 1.0, 34),
        uniform(&[2, 3, 4], -1.0, 1.0, 35),
    ];
    assert_ok("add", check_op(&xs, &|t, v| t.add(v[0], v[1])));
    assert_ok("mul", check_op(&xs, &|t, v| t.mul(v[0], v[1])));
    assert_ok("scale", check_op(&xs[..1], &|t, v| Ok(t.scale(v[0], -1.7))));
    assert_ok("sum", check_op(&xs[..1], &|t, v| Ok(t.sum(v[0]))));
    let xs = [
        uniform(&[2, 1, 4], -1.0, 1.0, 36),
        uniform(&[2, 3, 4], -1.0, 1.0, 37),
        uniform(&[2, 2, 4], -1.0, 1.0, 38),
    ];
    assert_ok("concat", check_op(&xs, &|t, v| t.concat(v)));
}

#[test]
fn cross_entropy_logits() {
    let x = [uniform(&[5, 4], -3.0, 3.0, 41)];
    let labels = [0, 3, 1, 1, 2];
    assert_ok(
        "cross_entropy",
        check_op(&x, &|t, v| t.cross_entropy(v[0], &labels)),
    );
}

/// Gives normalization parameters non-trivial values so their gradients
/// are exercised away from the identity initialization.
fn jitter_norm_params(net: &mut dyn Network<f64>, seed: u64) {
    for (i, p) in net.store_mut().params_mut().iter_mut().enumerate() {
        let n = p.value.shape().to_vec();
        if p.name.ends_with(".gamma") {
            p.value = uniform(&n, 0.6, 1.4, seed + i as u64);
        } else if p.name.ends_with(".beta") {
            p.value = uniform(&n, -0.3, 0.3, seed + i as u64);
        }
    }
}

#[test]
fn miniature_inception_time() {
    let cfg = InceptionConfig {
        in_channels: 2,
        n_classes: 3,
        depth: 3,
        nf: 2,
        bottleneck_channels: 2,
        kernel_sizes: vec![5, 3],
        residual_every: 3,
        seq_len: 10,
    };
    let mut net = InceptionTime::<f64>::new(cfg, 7).unwrap();
    assert_eq!(net.residual_joins(), 1);
    jitter_norm_params(&mut net, 100);
    let x = uniform(&[4, 2, 10], -1.0, 1.0, 51);
    let err = check_network(&mut net, &x, &[0, 2, 1, 2]);
    assert_ok("inception time", err);
}

#[test]
fn miniature_resnet2d() {
    let cfg = ResNet2DConfig {
        in_channels: 3,
        n_classes: 3,
        stage_widths: vec![2, 3],
        blocks_per_stage: 1,
        input_size: (6, 5),
    };
    let mut net = ResNet2D::<f64>::new(cfg, 9).unwrap();
    assert!(net.stages()[1][0].projection.is_some());
    jitter_norm_params(&mut net, 200);
    let x = uniform(&[3, 3, 6, 5], 0.0, 1.0, 52);
    let err = check_network(&mut net, &x, &[1, 0, 2]);
    assert_ok("resnet2d", err);
}
