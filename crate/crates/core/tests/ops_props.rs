use proptest::prelude::*;
use sigclass_core::ops::{conv1d, conv2d, relu, softmax, softmax_cross_entropy};
use sigclass_core::Tensor;

fn tensor(shape: Vec<usize>) -> impl Strategy<Value = Tensor<f64>> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0f64..2.0, n).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

fn conv_case() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Tensor<f64>)> {
    (1usize..3, 1usize..4, 3usize..20, 1usize..4, 0usize..3).prop_flat_map(|(b, c, l, f, kh)| {
        let k = 2 * kh + 1;
        (
            tensor(vec![b, c, l]),
            tensor(vec![b, c, l]),
            tensor(vec![f, c, k]),
        )
    })
}

proptest! {
    #[test]
    fn conv1d_is_linear((x, y, w) in conv_case(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mix = Tensor::new(
            x.shape().to_vec(),
            x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect(),
        ).unwrap();
        let lhs = conv1d(&mix, &w, None).unwrap();
        let (cx, cy) = (conv1d(&x, &w, None).unwrap(), conv1d(&y, &w, None).unwrap());
        let scale = lhs.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for ((l, p), q) in lhs.data().iter().zip(cx.data()).zip(cy.data()) {
            prop_assert!((l - (a * p + b * q)).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn conv_outputs_are_deterministic((x, _, w) in conv_case()) {
        let (a, b) = (conv1d(&x, &w, None).unwrap(), conv1d(&x, &w, None).unwrap());
        prop_assert_eq!(a.data(), b.data());
        let first_sample = x.slice_outer(0, 1).unwrap();
        let img = Tensor::new(vec![1, x.shape()[1], 1, x.shape()[2]], first_sample.data().to_vec()).unwrap();
        let k2 = Tensor::new(vec![w.shape()[0], w.shape()[1], 1, w.shape()[2]], w.data().to_vec()).unwrap();
        // a 1×K kernel over a one-row image is the 1D convolution
        let row = conv2d(&img, &k2, None, 1).unwrap();
        let first = conv1d(&first_sample, &w, None).unwrap();
        for (p, q) in row.data().iter().zip(first.data()) {
            prop_assert!((p - q).abs() < 1e-12);
        }
    }

    #[test]
    fn relu_is_idempotent(x in tensor(vec![3, 17])) {
        let once = relu(&x);
        let twice = relu(&once);
        prop_assert_eq!(twice.data(), once.data());
    }

    #[test]
    fn softmax_rows_sum_to_one(x in tensor(vec![5, 8]), scale in 0.1f64..50.0, labels in prop::collection::vec(0usize..8, 5)) {
        let x = x.map(|v| v * scale);
        let p = softmax(&x).unwrap();
        for row in p.data().chunks(8) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let (loss, _) = softmax_cross_entropy(&x, &labels).unwrap();
        prop_assert!(loss >= 0.0);
    }
}
