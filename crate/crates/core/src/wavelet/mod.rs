//! Continuous wavelet transform with a Morlet mother wavelet, and rendering
//! of the resulting scalograms as viridis heatmaps.

mod dataset;
mod image;
mod viridis;

pub use dataset::{signal_image, ScalogramImages};
pub use image::{colormap_index, render_heatmap, viridis, write_png, Colormap, RgbImage};
pub use viridis::VIRIDIS;

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest analysed frequency, just below Nyquist, in cycles per sample.
pub const TOP_FREQUENCY: f64 = 0.5 * 0.95;

/// The wavelet is dropped where `|t/s| >= TRUNCATION`; the envelope there is
/// below `e^-32`.
pub const TRUNCATION: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaveletConfig {
    /// Dimensionless centre frequency of the Morlet wavelet.
    pub omega0: f64,
    /// Number of scales; `None` uses one scale per sample.
    pub n_scales: Option<usize>,
    /// Scale range in samples; `None` derives it from the signal length.
    pub scale_min: Option<f64>,
    pub scale_max: Option<f64>,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        WaveletConfig {
            omega0: 6.0,
            n_scales: None,
            scale_min: None,
            scale_max: None,
        }
    }
}

impl WaveletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega0 >= 5.0) {
            return Err(Error::config(
                "omega0",
                format!("{} is below 5", self.omega0),
            ));
        }
        if self.n_scales == Some(0) {
            return Err(Error::config("n_scales", "must be positive"));
        }
        if let (Some(lo), Some(hi)) = (self.scale_min, self.scale_max) {
            if !(lo > 0.0 && lo < hi) {
                return Err(Error::config("scale_min", format!("need 0 < {lo} < {hi}")));
            }
        }
        Ok(())
    }

    /// Frequency in cycles per sample analysed at scale `s`.
    pub fn frequency(&self, scale: f64) -> f64 {
        self.omega0 / (2.0 * PI * scale)
    }

    pub fn scale_for(&self, frequency: f64) -> f64 {
        self.omega0 / (2.0 * PI * frequency)
    }
}

/// `ψ(t) = π^(-1/4) · e^(iω₀t) · e^(-t²/2)`
pub fn morlet(t: f64, omega0: f64) -> Complex64 {
    let env = PI.powf(-0.25) * (-0.5 * t * t).exp();
    Complex64::from_polar(env, omega0 * t)
}

/// Geometrically spaced scales, ascending. Unless overridden by the config
/// the count equals the signal length and the range maps to frequencies
/// from [`TOP_FREQUENCY`] down to `1/L` cycles per sample.
pub fn default_scales(len: usize, cfg: &WaveletConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if len < 2 {
        return Err(Error::config("signal length", format!("{len} is below 2")));
    }
    let n = cfg.n_scales.unwrap_or(len);
    let lo = cfg
        .scale_min
        .unwrap_or_else(|| cfg.scale_for(TOP_FREQUENCY));
    let hi = cfg
        .scale_max
        .unwrap_or_else(|| cfg.scale_for(1.0 / len as f64));
    if n == 1 {
        return Ok(vec![lo]);
    }
    let ratio = (hi / lo).ln() / (n - 1) as f64;
    Ok((0..n).map(|k| lo * (ratio * k as f64).exp()).collect())
}

/// Magnitude of the wavelet transform over scale × time.
#[derive(Clone, Debug, PartialEq)]
pub struct Scalogram {
    /// Row-major `[scales, len]`; row `k` belongs to `scales[k]`.
    pub magnitude: Vec<f64>,
    pub scales: Vec<f64>,
    /// Cycles per sample; strictly descending.
    pub frequencies: Vec<f64>,
    pub len: usize,
}

impl Scalogram {
    pub fn n_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.magnitude[k * self.len..(k + 1) * self.len]
    }

    pub fn at(&self, scale_idx: usize, t: usize) -> f64 {
        self.magnitude[scale_idx * self.len + t]
    }

    /// Scale index with the largest magnitude at time `t`.
    pub fn ridge(&self, t: usize) -> usize {
        (0..self.n_scales())
            .max_by(|&a, &b| self.at(a, t).total_cmp(&self.at(b, t)))
            .expect("at least one scale")
    }
}

/// `W(s,τ) = s^(-1/2) Σ_t x[t] · conj(ψ((t−τ)/s))` by direct summation,
/// with the wavelet truncated at `|t−τ| >= 8s`.
pub fn cwt(signal: &[f64], scales: &[f64], cfg: &WaveletConfig) -> Result<Scalogram> {
    cfg.validate()?;
    let len = signal.len();
    if len < 2 {
        return Err(Error::config("signal length", format!("{len} is below 2")));
    }
    if scales.is_empty() || scales.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::config(
            "scales",
            "need at least one positive finite scale",
        ));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "signal sample {i} is {}",
            signal[i]
        )));
    }
    let mut magnitude = Vec::with_capacity(scales.len() * len);
    let mut taps: Vec<Complex64> = Vec::new();
    for &s in scales {
        // half-width of the support in samples: every |d| < 8s
        let half = ((TRUNCATION * s).ceil() as usize)
            .saturating_sub(1)
            .min(len - 1);
        let norm = 1.0 / s.sqrt();
        taps.clear();
        taps.extend((0..=2 * half).map(|j| {
            let d = j as f64 - half as f64;
            if (d / s).abs() >= TRUNCATION {
                Complex64::new(0.0, 0.0)
            } else {
                morlet(d / s, cfg.omega0).conj() * norm
            }
        }));
        for tau in 0..len {
            let lo = tau.saturating_sub(half);
            let hi = (tau + half).min(len - 1);
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, &x) in signal.iter().enumerate().take(hi + 1).skip(lo) {
                acc += taps[t + half - tau] * x;
            }
            magnitude.push(acc.norm());
        }
    }
    Ok(Scalogram {
        magnitude,
        scales: scales.to_vec(),
        frequencies: scales.iter().map(|&s| cfg.frequency(s)).collect(),
        len,
    })
}

/// Transform with [`default_scales`].
pub fn scalogram(signal: &[f64], cfg: &WaveletConfig) -> Result<Scalogram> {
    let scales = default_scales(signal.len(), cfg)?;
    cwt(signal, &scales, cfg)
}
