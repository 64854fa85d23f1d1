use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use sigclass_core::nn::{InceptionConfig, ModelSpec, ResNet2DConfig};
use sigclass_core::ops::{conv1d, conv2d};
use sigclass_core::synth::{generate, SynthConfig};
use sigclass_core::wavelet::{scalogram, signal_image, Colormap, WaveletConfig};
use sigclass_core::{GradTape, Mode, Tensor};

fn ramp(shape: &[usize]) -> Tensor<f32> {
    Tensor::from_fn(shape.to_vec(), |i| ((i * 7919) % 997) as f32 / 997.0 - 0.5)
}

fn convolutions(c: &mut Criterion) {
    let x = ramp(&[64, 32, 94]);
    let k = ramp(&[32, 32, 39]);
    c.bench_function("conv1d 64x32x94 k39", |b| {
        b.iter(|| conv1d(black_box(&x), &k, None).unwrap())
    });
    let img = ramp(&[64, 16, 94, 94]);
    let k2 = ramp(&[16, 16, 3, 3]);
    c.bench_function("conv2d 64x16x94x94 3x3", |b| {
        b.iter(|| conv2d(black_box(&img), &k2, None, 1).unwrap())
    });
}

fn wavelet(c: &mut Criterion) {
    let ds = generate(&SynthConfig {
        n: 8,
        ..Default::default()
    })
    .unwrap();
    let cfg = WaveletConfig::default();
    c.bench_function("scalogram L=94", |b| {
        b.iter(|| scalogram(black_box(ds.signal(0)), &cfg).unwrap())
    });
    c.bench_function("scalogram image L=94", |b| {
        b.iter(|| signal_image(black_box(ds.signal(1)), &cfg, Colormap::Viridis).unwrap())
    });
}

fn networks(c: &mut Criterion) {
    let mut g = c.benchmark_group("train step batch 64");
    g.sample_size(10);
    let cases = [
        (
            ModelSpec::InceptionTime(InceptionConfig::default()),
            vec![64, 1, 94],
        ),
        (
            ModelSpec::Resnet2d(ResNet2DConfig::default()),
            vec![64, 3, 94, 94],
        ),
    ];
    for (spec, shape) in cases {
        let name = match spec {
            ModelSpec::InceptionTime(_) => "inception",
            ModelSpec::Resnet2d(_) => "resnet2d",
        };
        let mut model = spec.build::<f32>(0).unwrap();
        let x = ramp(&shape);
        let labels: Vec<usize> = (0..64).map(|i| i % 8).collect();
        g.bench_function(name, |b| {
            b.iter(|| {
                let mut tape = GradTape::new();
                let input = tape.leaf(x.clone(), false);
                let f = model.forward(&mut tape, input, Mode::Train).unwrap();
                let loss = tape.cross_entropy(f.logits, &labels).unwrap();
                tape.backward(loss).unwrap();
            })
        });
    }
    g.finish();
}

criterion_group!(benches, convolutions, wavelet, networks);
criterion_main!(benches);
