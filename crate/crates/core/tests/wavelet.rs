use std::f64::consts::PI;

use num_complex::Complex64;
use sigclass_core::wavelet::{cwt, default_scales, morlet, scalogram, WaveletConfig};

const L: usize = 94;

#[test]
fn morlet_has_unit_energy() {
    let dt = 1e-3;
    let n = (16.0 / dt) as i64;
    let energy: f64 = (-n / 2..=n / 2)
        .map(|i| {
            let w = if i.abs() == n / 2 { 0.5 } else { 1.0 };
            w * morlet(i as f64 * dt, 6.0).norm_sqr() * dt
        })
        .sum();
    assert!((energy - 1.0).abs() < 1e-3, "energy {energy}");
}

fn nearest_bin(scales: &[f64], s: f64) -> usize {
    (0..scales.len())
        .min_by(|&a, &b| {
            (scales[a].ln() - s.ln())
                .abs()
                .total_cmp(&(scales[b].ln() - s.ln()).abs())
        })
        .unwrap()
}

/// Fraction of columns outside the cone of influence (`√2·s*` from either
/// edge) whose ridge is within one bin of `s*`.
fn ridge_hit_rate(f: f64) -> (f64, usize) {
    let cfg = WaveletConfig::default();
    let x: Vec<f64> = (0..L).map(|t| (2.0 * PI * f * t as f64).sin()).collect();
    let sc = scalogram(&x, &cfg).unwrap();
    let s_star = cfg.scale_for(f);
    let target = nearest_bin(&sc.scales, s_star) as isize;
    let coi = (2f64.sqrt() * s_star).ceil() as usize;
    let cols: Vec<usize> = (coi..L.saturating_sub(coi)).collect();
    let hits = cols
        .iter()
        .filter(|&&t| (sc.ridge(t) as isize - target).abs() <= 1)
        .count();
    (hits as f64 / cols.len() as f64, cols.len())
}

#[test]
fn sinusoid_ridge_tracks_expected_scale() {
    for f in [0.05, 0.1, 0.2, 0.4] {
        let (rate, n) = ridge_hit_rate(f);
        assert!(n > 0);
        assert!(
            rate >= 0.9,
            "f={f}: {rate} of {n} interior columns on the ridge"
        );
    }
}

#[test]
fn impulse_peaks_at_its_position() {
    let cfg = WaveletConfig::default();
    for t0 in [20, 47, 70] {
        let mut x = vec![0.0; L];
        x[t0] = 1.0;
        let sc = scalogram(&x, &cfg).unwrap();
        for k in 0..sc.n_scales() {
            let row = sc.row(k);
            let best = (0..L).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            assert!(
                (best as isize - t0 as isize).abs() <= 1,
                "scale {k}: peak at {best}, impulse at {t0}"
            );
        }
    }
}

#[test]
fn windowed_sinusoid_energy_concentrates_near_ridge() {
    let cfg = WaveletConfig::default();
    for f in [0.1, 0.2] {
        let x: Vec<f64> = (0..L)
            .map(|t| {
                let w = 0.5 - 0.5 * (2.0 * PI * t as f64 / (L - 1) as f64).cos();
                w * (2.0 * PI * f * t as f64).cos()
            })
            .collect();
        let sc = scalogram(&x, &cfg).unwrap();
        let (mut near, mut total) = (0.0, 0.0);
        for t in 0..L {
            let r = sc.ridge(t) as isize;
            for k in 0..sc.n_scales() {
                let e = sc.at(k, t).powi(2);
                total += e;
                if (k as isize - r).abs() <= 3 {
                    near += e;
                }
            }
        }
        assert!(
            near / total >= 0.5,
            "f={f}: {:.3} of energy near the ridge",
            near / total
        );
    }
}

#[test]
fn matches_brute_force_transform() {
    let cfg = WaveletConfig::default();
    let x: Vec<f64> = (0..L).map(|t| ((t * 37 % 11) as f64 - 5.0) / 3.0).collect();
    let scales = default_scales(L, &cfg).unwrap();
    let sc = cwt(&x, &scales, &cfg).unwrap();
    for (k, &s) in scales.iter().enumerate() {
        for tau in 0..L {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &v) in x.iter().enumerate() {
                let u = (t as f64 - tau as f64) / s;
                if u.abs() < 8.0 {
                    let env = PI.powf(-0.25) * (-0.5 * u * u).exp();
                    acc += Complex64::new(env * (6.0 * u).cos(), -env * (6.0 * u).sin()) * v;
                }
            }
            let want = acc.norm() / s.sqrt();
            let got = sc.at(k, tau);
            assert!(
                (got - want).abs() <= 1e-12 * want.max(1.0),
                "scale {k} tau {tau}: {got} vs {want}"
            );
        }
    }
}

#[test]
fn default_scales_span_expected_frequencies() {
    let cfg = WaveletConfig::default();
    let sc = scalogram(&vec![0.0; L], &cfg).unwrap();
    assert_eq!(sc.n_scales(), L);
    assert!((sc.frequencies[0] - 0.475).abs() < 1e-9);
    assert!((sc.frequencies[L - 1] - 1.0 / L as f64).abs() < 1e-9);
}
