use std::io::BufWriter;
use std::path::Path;

use super::viridis::VIRIDIS;
use super::Scalogram;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Colormap {
    #[default]
    Viridis,
}

impl Colormap {
    pub fn color(self, v: f64) -> [u8; 3] {
        match self {
            Colormap::Viridis => viridis(v),
        }
    }
}

/// Lower lookup-table entry used for a normalized value.
pub fn colormap_index(v: f64) -> usize {
    let pos = v.clamp(0.0, 1.0) * 255.0;
    (pos.floor() as usize).min(255)
}

/// Viridis color of `v ∈ [0,1]`, linearly interpolated between the two
/// neighbouring table entries and rounded to 8 bits.
pub fn viridis(v: f64) -> [u8; 3] {
    let pos = v.clamp(0.0, 1.0) * 255.0;
    let i = colormap_index(v);
    let j = (i + 1).min(255);
    let frac = pos - i as f64;
    let mut out = [0u8; 3];
    for (c, o) in out.iter_mut().enumerate() {
        let a = VIRIDIS[i][c] as f64;
        let b = VIRIDIS[j][c] as f64;
        *o = ((a + (b - a) * frac) * 255.0).round().clamp(0.0, 255.0) as u8;
    }
    out
}

/// 8-bit RGB raster, row-major, top row first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Channels-first `[3, H, W]` tensor with values scaled to `[0, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let (h, w) = (self.height, self.width);
        Tensor::from_fn([3, h, w], |i| {
            let (c, px) = (i / (h * w), i % (h * w));
            T::of(self.pixels[px * 3 + c] as f64 / 255.0)
        })
    }
}

/// Map a scalogram to colors after min–max normalization over the whole
/// image. Image row `r` shows scale index `r`, so the largest scale (lowest
/// frequency) is the bottom row. A constant scalogram maps to color 0.
pub fn render_heatmap(sc: &Scalogram, cmap: Colormap) -> Result<RgbImage> {
    if let Some(bad) = sc.magnitude.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("scalogram value {bad}")));
    }
    let lo = sc.magnitude.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sc
        .magnitude
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let mut pixels = Vec::with_capacity(sc.magnitude.len() * 3);
    for &v in &sc.magnitude {
        let norm = if span > 0.0 { (v - lo) / span } else { 0.0 };
        pixels.extend_from_slice(&cmap.color(norm));
    }
    Ok(RgbImage {
        width: sc.len,
        height: sc.n_scales(),
        pixels,
    })
}

pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(&img.pixels)?;
    writer.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sc(values: Vec<f64>, rows: usize) -> Scalogram {
        let len = values.len() / rows;
        Scalogram {
            magnitude: values,
            scales: (1..=rows).map(|s| s as f64).collect(),
            frequencies: (1..=rows).map(|s| 1.0 / s as f64).collect(),
            len,
        }
    }

    #[test]
    fn table_endpoints() {
        assert_eq!(viridis(0.0), [68, 1, 84]);
        assert_eq!(viridis(1.0), [253, 231, 37]);
    }

    #[test]
    fn constant_scalogram_is_uniform_dark() {
        let img = render_heatmap(&sc(vec![3.3; 12], 3), Colormap::Viridis).unwrap();
        assert_eq!((img.width, img.height), (4, 3));
        assert!(img.pixels.chunks(3).all(|p| p == [68, 1, 84]));
    }

    #[test]
    fn index_is_monotone() {
        let mut prev = 0;
        for i in 0..=1000 {
            let idx = colormap_index(i as f64 / 1000.0);
            assert!(idx >= prev);
            prev = idx;
        }
        assert_eq!(prev, 255);
    }

    #[test]
    fn rendering_ignores_positive_rescaling() {
        let vals: Vec<f64> = (0..20).map(|i| ((i * 7) % 11) as f64).collect();
        let a = render_heatmap(&sc(vals.clone(), 4), Colormap::Viridis).unwrap();
        let b = render_heatmap(
            &sc(vals.iter().map(|v| v * 8.0).collect(), 4),
            Colormap::Viridis,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn png_round_trip_dimensions() {
        let dir = std::env::temp_dir().join(format!("sigclass-png-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("x.png");
        let img = render_heatmap(
            &sc((0..12).map(|v| v as f64).collect(), 3),
            Colormap::Viridis,
        )
        .unwrap();
        write_png(&path, &img).unwrap();
        let dec = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&path).unwrap()));
        let reader = dec.read_info().unwrap();
        assert_eq!((reader.info().width, reader.info().height), (4, 3));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
