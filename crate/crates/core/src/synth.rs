//! Deterministic synthetic eight-class signal generator.
//!
//! Time `t` runs over sample indices `0..L`; `U(a, b)` is a uniform draw.
//! Every signal is `A · shape(t) / rms(shape) + noise`, with amplitude
//! `A ~ U(0.5, 2)` and white Gaussian noise of standard deviation `noise · A`.
//!
//! | class | family | shape(t) |
//! |---|---|---|
//! | 0 | N-wave pulse | `−(t−c)/w` for `|t−c| < w`, else 0; `c ~ U(0.25L, 0.75L)`, `w ~ U(6, 14)` |
//! | 1 | Gaussian low tone | `exp(−(t−c)²/2σ²)·cos(2πft+φ)`; `f ~ U(0.025, 0.06)`, `σ ~ U(12, 20)`, `c ~ U(0.35L, 0.65L)` |
//! | 2 | up-chirp | `sin(2π(f₀t + (f₁−f₀)t²/2L) + φ)`; `f₀ ~ U(0.03, 0.07)`, `f₁ ~ U(0.2, 0.3)` |
//! | 3 | down-chirp | class 2 with `f₀` and `f₁` exchanged |
//! | 4 | damped harmonic | `exp(−(t−t₀)/τ)·sin(2πf(t−t₀)+φ)` for `t ≥ t₀`; `t₀ ~ U(5, 0.35L)`, `f ~ U(0.08, 0.2)`, `τ ~ U(8, 20)` |
//! | 5 | dual-tone beat | `sin(2πf₁t+φ₁) + sin(2π(f₁+Δ)t+φ₂)`; `f₁ ~ U(0.1, 0.18)`, `Δ ~ U(0.02, 0.04)` |
//! | 6 | noise burst | `exp(−(t−c)²/2σ²)·Σₖ sin(2πfₖt+φₖ)`, six tones `fₖ ~ U(0.15, 0.35)`; `c ~ U(0.3L, 0.7L)`, `σ ~ U(6, 12)` |
//! | 7 | AM oscillation | `(1 + m·cos(2πfₘt+φₘ))·sin(2πf_c t+φ)`; `f_c ~ U(0.25, 0.4)`, `fₘ ~ U(0.02, 0.05)`, `m ~ U(0.5, 0.9)` |
//!
//! Phases are `U(0, 2π)`. Signal `i` draws from its own PCG64 stream
//! `(state = seed, stream = i)`, so generation order never matters.
//! Classes cycle `0, 1, …, 7, 0, 1, …` over the indices.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64;

use crate::data::{SignalDataset, NUM_CLASSES};
use crate::error::{Error, Result};

pub const DEFAULT_NOISE: f64 = 0.3;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub len: usize,
    pub seed: u64,
    /// Noise standard deviation relative to the clean signal's RMS.
    pub noise: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 2400,
            len: 94,
            seed: 42,
            noise: DEFAULT_NOISE,
        }
    }
}

/// Source of waveform parameters: random draws, or range midpoints for
/// noise-free class prototypes.
enum Draw<'a> {
    Random(&'a mut Pcg64),
    Mid,
}

impl Draw<'_> {
    fn u(&mut self, lo: f64, hi: f64) -> f64 {
        match self {
            Draw::Random(rng) => rng.random_range(lo..hi),
            Draw::Mid => 0.5 * (lo + hi),
        }
    }

    fn phase(&mut self) -> f64 {
        match self {
            Draw::Random(rng) => rng.random_range(0.0..2.0 * PI),
            Draw::Mid => 0.0,
        }
    }
}

fn shape(class: usize, len: usize, d: &mut Draw<'_>) -> Vec<f64> {
    let l = len as f64;
    let ts = (0..len).map(|t| t as f64);
    match class {
        0 => {
            let c = d.u(0.25 * l, 0.75 * l);
            let w = d.u(6.0, 14.0);
            ts.map(|t| if (t - c).abs() < w { -(t - c) / w } else { 0.0 })
                .collect()
        }
        1 => {
            let (f, sd, c, ph) = (
                d.u(0.025, 0.06),
                d.u(12.0, 20.0),
                d.u(0.35 * l, 0.65 * l),
                d.phase(),
            );
            ts.map(|t| (-(t - c).powi(2) / (2.0 * sd * sd)).exp() * (2.0 * PI * f * t + ph).cos())
                .collect()
        }
        2 | 3 => {
            let (lo, hi, ph) = (d.u(0.03, 0.07), d.u(0.2, 0.3), d.phase());
            let (f0, f1) = if class == 2 { (lo, hi) } else { (hi, lo) };
            ts.map(|t| (2.0 * PI * (f0 * t + (f1 - f0) * t * t / (2.0 * l)) + ph).sin())
                .collect()
        }
        4 => {
            let (t0, f, tau, ph) = (
                d.u(5.0, 0.35 * l),
                d.u(0.08, 0.2),
                d.u(8.0, 20.0),
                d.phase(),
            );
            ts.map(|t| {
                if t < t0 {
                    0.0
                } else {
                    (-(t - t0) / tau).exp() * (2.0 * PI * f * (t - t0) + ph).sin()
                }
            })
            .collect()
        }
        5 => {
            let (f1, df, p1, p2) = (d.u(0.1, 0.18), d.u(0.02, 0.04), d.phase(), d.phase());
            ts.map(|t| (2.0 * PI * f1 * t + p1).sin() + (2.0 * PI * (f1 + df) * t + p2).sin())
                .collect()
        }
        6 => {
            let (c, sd) = (d.u(0.3 * l, 0.7 * l), d.u(6.0, 12.0));
            let mid = matches!(d, Draw::Mid);
            let tones: Vec<(f64, f64)> = (0..6)
                .map(|k| {
                    if mid {
                        (0.15 + 0.04 * k as f64, 0.0)
                    } else {
                        (d.u(0.15, 0.35), d.phase())
                    }
                })
                .collect();
            ts.map(|t| {
                let env = (-(t - c).powi(2) / (2.0 * sd * sd)).exp();
                env * tones
                    .iter()
                    .map(|&(f, p)| (2.0 * PI * f * t + p).sin())
                    .sum::<f64>()
            })
            .collect()
        }
        7 => {
            let (fc, fm, m, pm, ph) = (
                d.u(0.25, 0.4),
                d.u(0.02, 0.05),
                d.u(0.5, 0.9),
                d.phase(),
                d.phase(),
            );
            ts.map(|t| (1.0 + m * (2.0 * PI * fm * t + pm).cos()) * (2.0 * PI * fc * t + ph).sin())
                .collect()
        }
        _ => unreachable!("class {class} out of range"),
    }
}

pub fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

/// Noise-free signal of `class` with every parameter at its range midpoint.
pub fn prototype(class: usize, len: usize) -> Vec<f64> {
    shape(class, len, &mut Draw::Mid)
}

/// Signal `index` of the dataset described by `cfg`.
pub fn signal(cfg: &SynthConfig, index: usize) -> (usize, Vec<f64>) {
    let class = index % NUM_CLASSES;
    let mut rng = Pcg64::new(cfg.seed as u128, index as u128);
    let amp = rng.random_range(0.5..2.0);
    let clean = shape(class, cfg.len, &mut Draw::Random(&mut rng));
    let gain = amp / rms(&clean);
    let mut x: Vec<f64> = clean.into_iter().map(|v| v * gain).collect();
    if cfg.noise > 0.0 {
        let sd = cfg.noise * amp;
        for v in &mut x {
            let z: f64 = rng.sample(StandardNormal);
            *v += sd * z;
        }
    }
    (class, x)
}

pub fn generate(cfg: &SynthConfig) -> Result<SignalDataset> {
    if cfg.n == 0 || cfg.n % NUM_CLASSES != 0 {
        return Err(Error::config(
            "n",
            format!("{} is not a positive multiple of {NUM_CLASSES}", cfg.n),
        ));
    }
    if cfg.len < 16 {
        return Err(Error::config("length", format!("{} is below 16", cfg.len)));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::config(
            "noise",
            format!("{} must be finite and non-negative", cfg.noise),
        ));
    }
    let mut values = Vec::with_capacity(cfg.n * cfg.len);
    let mut labels = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let (class, x) = signal(cfg, i);
        values.extend(x);
        labels.push(class);
    }
    SignalDataset::new(values, labels, cfg.len, "synthetic")
}
