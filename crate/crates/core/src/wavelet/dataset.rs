use super::{render_heatmap, scalogram, Colormap, RgbImage, WaveletConfig};
use crate::data::{SampleSource, SignalDataset};
use crate::error::Result;

/// Scalogram heatmap of every signal, kept as 8-bit RGB. Samples are
/// `[3, S, L]` with channel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalogramImages {
    images: Vec<RgbImage>,
    labels: Vec<usize>,
    height: usize,
    width: usize,
}

/// Heatmap of one signal.
pub fn signal_image(signal: &[f64], cfg: &WaveletConfig, cmap: Colormap) -> Result<RgbImage> {
    render_heatmap(&scalogram(signal, cfg)?, cmap)
}

impl ScalogramImages {
    pub fn from_dataset(ds: &SignalDataset, cfg: &WaveletConfig, cmap: Colormap) -> Result<Self> {
        let images = (0..ds.n())
            .map(|i| signal_image(ds.signal(i), cfg, cmap))
            .collect::<Result<Vec<_>>>()?;
        let (height, width) = (images[0].height, images[0].width);
        Ok(ScalogramImages {
            images,
            labels: ds.labels().to_vec(),
            height,
            width,
        })
    }

    pub fn image(&self, i: usize) -> &RgbImage {
        &self.images[i]
    }
}

impl SampleSource for ScalogramImages {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn sample_shape(&self) -> Vec<usize> {
        vec![3, self.height, self.width]
    }

    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    fn fill(&self, i: usize, out: &mut [f64]) {
        let plane = self.height * self.width;
        for (px, rgb) in self.images[i].pixels.chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * plane + px] = rgb[c] as f64 / 255.0;
            }
        }
    }

    /// One scalogram value per pixel.
    fn points_per_sample(&self) -> usize {
        self.height * self.width
    }
}
